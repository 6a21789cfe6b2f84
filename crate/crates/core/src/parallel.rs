//! Chunked parallel map that preserves input order.

use rayon::prelude::*;

pub const DEFAULT_CHUNK: usize = 1024;

/// Worker pool handle. Results never depend on the worker count.
pub struct Workers {
    pool: Option<rayon::ThreadPool>,
    threads: usize,
    chunk: usize,
}

impl Workers {
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let threads = threads.max(1);
        let pool = if threads > 1 {
            Some(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
        } else {
            None
        };
        Ok(Workers {
            pool,
            threads,
            chunk: DEFAULT_CHUNK,
        })
    }

    pub fn single() -> Self {
        Workers {
            pool: None,
            threads: 1,
            chunk: DEFAULT_CHUNK,
        }
    }

    pub fn with_chunk(mut self, chunk: usize) -> Self {
        self.chunk = chunk.max(1);
        self
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        match &self.pool {
            Some(pool) => pool.install(|| items.into_par_iter().map(&f).collect()),
            None => items.into_iter().map(f).collect(),
        }
    }

    /// Lazily maps `iter` chunk by chunk, yielding results in input order.
    pub fn map_ordered<'a, I, R, F>(&'a self, iter: I, f: F) -> OrderedMap<'a, I, R>
    where
        I: Iterator,
        I::Item: Send,
        R: Send,
        F: Fn(I::Item) -> R + Sync + Send + 'a,
    {
        OrderedMap {
            iter,
            f: Box::new(f),
            workers: self,
            buf: Vec::new().into_iter(),
        }
    }
}

pub struct OrderedMap<'a, I: Iterator, R> {
    iter: I,
    f: Box<dyn Fn(I::Item) -> R + Sync + Send + 'a>,
    workers: &'a Workers,
    buf: std::vec::IntoIter<R>,
}

impl<I, R> Iterator for OrderedMap<'_, I, R>
where
    I: Iterator,
    I::Item: Send,
    R: Send,
{
    type Item = R;

    fn next(&mut self) -> Option<R> {
        if let Some(r) = self.buf.next() {
            return Some(r);
        }
        let chunk: Vec<I::Item> = self.iter.by_ref().take(self.workers.chunk).collect();
        if chunk.is_empty() {
            return None;
        }
        let f = &self.f;
        self.buf = self.workers.map(chunk, f).into_iter();
        self.buf.next()
    }
}
