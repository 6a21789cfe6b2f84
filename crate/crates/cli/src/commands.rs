use std::cell::{Cell, RefCell};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bisift::align::{self, EmbeddingMatrix};
use bisift::analytics::{
    self, CompositionAccumulator, DomainAccumulator, DomainResolver, GenLangAccumulator, Generation, ReportFormat,
};
use bisift::classify::{self, Stage2Context, Stage2Mode, Stage2Summary};
use bisift::corpus::CorpusWriter;
use bisift::entropy::{self, Stage1Report};
use bisift::judge::JudgeClient;
use bisift::langid::SidecarScorer;
use bisift::splits::{self, SplitBuilder, SplitSpec};
use bisift::synth::{self, SynthConfig};
use bisift::{read_corpus, write_corpus, CorpusError, LangIdModel, SentenceScorer, Workers};
use serde_json::{json, Value};

use crate::config::{FileConfig, API_KEY_ENV, ENDPOINT_ENV};
use crate::io::{self, Records, RunReport};
use crate::{
    AlignArgs, CheckFailed, ClassifyArgs, Cli, Command, Common, DetectArgs, ExportModelArgs, GenlangArgs, ScorerArgs,
    SplitArgs, StatsArgs, SynthArgs, SynthKind,
};

struct Ctx {
    file: FileConfig,
    quiet: bool,
    started: Instant,
}

impl Ctx {
    fn progress(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("[{:>7.2}s] {msg}", self.started.elapsed().as_secs_f64());
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        file: FileConfig::load(cli.config.as_deref())?,
        quiet: cli.quiet,
        started: Instant::now(),
    };
    match cli.command {
        Command::Detect(a) => detect(a, &ctx),
        Command::Classify(a) => classify(a, &ctx),
        Command::Split(a) => split(a, &ctx),
        Command::Stats(a) => stats(a, &ctx),
        Command::Genlang(a) => genlang(a, &ctx),
        Command::Align(a) => align(a, &ctx),
        Command::Synth(a) => synth(a, &ctx),
        Command::ExportModel(a) => export_model(a, &ctx),
    }
}

enum Scorer {
    Bundled,
    Model(LangIdModel),
    Sidecar(SidecarScorer),
}

impl Scorer {
    fn load(args: &ScorerArgs, file: &FileConfig) -> Result<(Self, String)> {
        if let Some(path) = &args.scores {
            let s = SidecarScorer::load(path).with_context(|| format!("loading scores {}", path.display()))?;
            return Ok((Scorer::Sidecar(s), format!("scores:{}", path.display())));
        }
        match args.model.as_ref().or(file.model.as_ref()) {
            Some(path) => {
                let m = LangIdModel::load(path).with_context(|| format!("loading model {}", path.display()))?;
                Ok((Scorer::Model(m), path.display().to_string()))
            }
            None => Ok((Scorer::Bundled, "bundled".into())),
        }
    }

    fn get(&self) -> &dyn SentenceScorer {
        match self {
            Scorer::Bundled => LangIdModel::bundled(),
            Scorer::Model(m) => m,
            Scorer::Sidecar(s) => s,
        }
    }
}

fn workers(common: &Common, file: &FileConfig) -> Result<Workers> {
    let n = file.workers(common.workers)?;
    Workers::new(n).context("starting worker pool")
}

fn format(common: &Common, file: &FileConfig) -> ReportFormat {
    file.format(common.format.map(Into::into))
}

/// Prints the human or machine rendering of a summary on stdout.
fn emit(format: ReportFormat, human: String, machine: &Value) {
    match format {
        ReportFormat::Human => print!("{human}"),
        ReportFormat::Machine => print!("{}", io::to_json(machine)),
    }
}

/// Writes a report to `output` in the chosen format, or prints it.
fn deliver(format: ReportFormat, human: String, machine: &Value, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => io::write_text(
            path,
            &match format {
                ReportFormat::Human => human,
                ReportFormat::Machine => io::to_json(machine),
            },
        ),
        None => {
            emit(format, human, machine);
            Ok(())
        }
    }
}

fn finish_report(mut report: RunReport, common: &Common, primary: Option<&Path>) -> Result<()> {
    if let Some(path) = common.report.clone().or_else(|| primary.map(io::sibling_report)) {
        report.outputs.sort();
        report.write(&path)?;
    }
    Ok(())
}

fn rate_line(s: &mut String, name: &str, n: u64, total: u64) {
    let pct = if total == 0 {
        0.0
    } else {
        100.0 * n as f64 / total as f64
    };
    let _ = writeln!(s, "{name:<16}{n:>10}{pct:>9.2}%");
}

fn render_stage1(r: &Stage1Report) -> String {
    let c = &r.counts;
    let mut s = String::new();
    let _ = writeln!(s, "{:<16}{:>10}", "documents", c.documents);
    rate_line(&mut s, "candidates", c.candidates, c.documents);
    rate_line(&mut s, "monolingual", c.monolingual, c.documents);
    rate_line(&mut s, "out_of_pair", c.out_of_pair, c.documents);
    rate_line(&mut s, "  oversize", c.oversize, c.documents);
    rate_line(&mut s, "  errors", c.errors, c.documents);
    s
}

fn render_stage2(r: &Stage2Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16}{:>10}", "passthrough", r.passthrough);
    let _ = writeln!(s, "{:<16}{:>10}", "candidates", r.candidates);
    for (name, n) in [
        ("rejected", r.rejected),
        ("parallel", r.parallel),
        ("code_switching", r.code_switching),
        ("miscellaneous", r.miscellaneous),
        ("unresolved", r.unresolved),
        ("fallbacks", r.fallbacks),
    ] {
        rate_line(&mut s, name, n, r.candidates);
    }
    s
}

fn detect(a: DetectArgs, ctx: &Ctx) -> Result<()> {
    let file = &ctx.file;
    let pair = file.pair(a.common.pair.as_deref())?;
    let mut filter = file.filter.clone();
    if let Some(t) = a.tau {
        filter.tau = t;
    }
    if let Some(m) = a.min_pair_mass {
        filter.min_pair_mass = m;
    }
    if a.per_sentence_normalization {
        filter.normalize_per_sentence = true;
    }
    if let Some(b) = a.max_doc_bytes {
        filter.max_doc_bytes = b;
    }
    filter.validate()?;
    let (scorer, scorer_name) = Scorer::load(&a.scorer, file)?;
    let workers = workers(&a.common, file)?;
    let inputs = io::expand_inputs(&a.input)?;

    let skipped = Cell::new(0);
    let fatal = RefCell::new(None);
    let records = Records::new(read_corpus(&inputs), &skipped, &fatal, ctx.quiet);
    let mut writer = CorpusWriter::create(&a.output, true)?;
    let mut stream = entropy::run_stage1(records, pair, scorer.get(), &filter, &workers)?;
    ctx.progress(format!("stage 1 over {} shard(s)", inputs.len()));
    for doc in &mut stream {
        writer.write(&doc)?;
    }
    check_fatal(&fatal)?;
    let summary = stream.summary().report();
    writer.finish()?;
    ctx.progress(format!(
        "{} documents, {} candidates",
        summary.counts.documents, summary.counts.candidates
    ));

    let machine = json!({"stage1": summary, "skipped_records": skipped.get()});
    let mut report = RunReport::new("detect", json!({"pair": pair, "scorer": scorer_name, "filter": filter}));
    report.inputs = io::display(&inputs);
    report.outputs = io::display(std::slice::from_ref(&a.output));
    report.summary = machine.clone();
    finish_report(report, &a.common, Some(&a.output))?;
    emit(format(&a.common, file), render_stage1(&summary), &machine);
    Ok(())
}

fn check_fatal(fatal: &RefCell<Option<CorpusError>>) -> Result<()> {
    match fatal.borrow_mut().take() {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn classify(a: ClassifyArgs, ctx: &Ctx) -> Result<()> {
    let file = &ctx.file;
    let pair = file.pair(a.common.pair.as_deref())?;
    let mode: Stage2Mode = a.mode.map(Into::into).or(file.mode).unwrap_or(Stage2Mode::Heuristic);
    let config = file.classifier.clone();
    config.validate()?;
    let (scorer, scorer_name) = Scorer::load(&a.scorer, file)?;

    let mut judge_config = file.judge.clone();
    if let Some(url) = a.judge_endpoint {
        judge_config.endpoint_url = url;
    } else if judge_config.endpoint_url.is_empty() {
        if let Ok(url) = std::env::var(ENDPOINT_ENV) {
            judge_config.endpoint_url = url;
        }
    }
    if let Some(m) = a.judge_model {
        judge_config.model_name = m;
    }
    if judge_config.api_key.is_none() {
        judge_config.api_key = std::env::var(API_KEY_ENV).ok();
    }
    let judge = match mode {
        Stage2Mode::Heuristic => None,
        _ => {
            if judge_config.endpoint_url.is_empty() {
                bail!("mode {mode:?} needs a judge endpoint (--judge-endpoint or {ENDPOINT_ENV})");
            }
            Some(JudgeClient::new(judge_config.clone())?)
        }
    };
    // Remote calls are I/O bound; without an explicit worker count the
    // judge's concurrency sets the pool.
    let workers = match &judge {
        Some(j) if a.common.workers.is_none() && file.workers.is_none() => {
            Workers::new(j.config().concurrency.max(1)).context("starting worker pool")?
        }
        _ => workers(&a.common, file)?,
    };
    let inputs = io::expand_inputs(&a.input)?;

    let stage2 = Stage2Context {
        pair,
        scorer: scorer.get(),
        config: &config,
        mode,
        judge: judge.as_ref(),
    };
    let skipped = Cell::new(0);
    let fatal = RefCell::new(None);
    let records = Records::new(read_corpus(&inputs), &skipped, &fatal, ctx.quiet);
    let mut writer = CorpusWriter::create(&a.output, true)?;
    let mut stream = classify::run_stage2(records, &stage2, &workers)?;
    ctx.progress(format!("stage 2 ({mode:?}) over {} shard(s)", inputs.len()));
    for doc in &mut stream {
        writer.write(&doc)?;
    }
    check_fatal(&fatal)?;
    let summary = stream.summary();
    writer.finish()?;
    ctx.progress(format!("{} candidates classified", summary.candidates));

    let mut judge_echo = json!({
        "endpoint_url": judge_config.endpoint_url,
        "model_name": judge_config.model_name,
        "max_retries": judge_config.max_retries,
        "timeout_secs": judge_config.timeout_secs,
        "verify_remotely": judge_config.verify_remotely,
    });
    if judge.is_none() {
        judge_echo = Value::Null;
    }
    let machine = json!({"stage2": summary, "skipped_records": skipped.get()});
    let mut report = RunReport::new(
        "classify",
        json!({
            "pair": pair,
            "scorer": scorer_name,
            "mode": mode,
            "classifier": config,
            "judge": judge_echo,
        }),
    );
    report.inputs = io::display(&inputs);
    report.outputs = io::display(std::slice::from_ref(&a.output));
    report.summary = machine.clone();
    finish_report(report, &a.common, Some(&a.output))?;
    emit(format(&a.common, file), render_stage2(&summary), &machine);
    Ok(())
}

fn split(a: SplitArgs, ctx: &Ctx) -> Result<()> {
    let file = &ctx.file;
    let inputs = io::expand_inputs(&a.input)?;
    std::fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    let ext = if a.gzip { "jsonl.gz" } else { "jsonl" };
    let outputs: Vec<(SplitSpec, PathBuf)> = SplitSpec::all(a.keep_out_of_pair)
        .into_iter()
        .map(|spec| {
            let path = a.output.join(format!("{}.{ext}", spec.name));
            (spec, path)
        })
        .collect();
    let paths: Vec<PathBuf> = outputs.iter().map(|(_, p)| p.clone()).collect();
    let mut builder = SplitBuilder::create(outputs, a.strip_annotations)?;
    let skipped = Cell::new(0);
    let fatal = RefCell::new(None);
    for doc in Records::new(read_corpus(&inputs), &skipped, &fatal, ctx.quiet) {
        builder.push(&doc)?;
    }
    check_fatal(&fatal)?;
    let (summaries, labels) = builder.finish()?;
    let algebra = splits::verify_split_algebra(&summaries, &labels);
    ctx.progress(format!("{} splits written", summaries.len()));

    let mut human = String::new();
    let _ = writeln!(human, "{:<24}{:>10}{:>14}", "split", "documents", "tokens");
    for (name, s) in &summaries {
        let _ = writeln!(human, "{:<24}{:>10}{:>14}", name.as_str(), s.doc_count, s.token_count);
    }
    let _ = writeln!(human);
    for c in &algebra.checks {
        let _ = writeln!(
            human,
            "{} {:<40} {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let label_counts: Value = labels
        .counts()
        .iter()
        .map(|(l, n)| (l.as_str().to_string(), json!(n)))
        .collect::<serde_json::Map<_, _>>()
        .into();
    let machine = json!({
        "splits": summaries,
        "labels": label_counts,
        "algebra": algebra,
        "skipped_records": skipped.get(),
    });
    let mut report = RunReport::new(
        "split",
        json!({
            "keep_out_of_pair": a.keep_out_of_pair,
            "strip_annotations": a.strip_annotations,
            "gzip": a.gzip,
        }),
    );
    report.inputs = io::display(&inputs);
    report.outputs = io::display(&paths);
    report.summary = machine.clone();
    let report_path = a.common.report.clone().unwrap_or_else(|| a.output.join("run.json"));
    report.outputs.sort();
    report.write(&report_path)?;
    emit(format(&a.common, file), human, &machine);
    if !algebra.passed {
        return Err(CheckFailed("split algebra check failed".into()).into());
    }
    Ok(())
}

fn stats(a: StatsArgs, ctx: &Ctx) -> Result<()> {
    let file = &ctx.file;
    let pair = file.pair(a.common.pair.as_deref())?;
    let inputs = io::expand_inputs(&a.input)?;
    let custom;
    let resolver = match &a.suffix_list {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            custom = DomainResolver::from_list(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            &custom
        }
        None => DomainResolver::bundled(),
    };
    let mut composition = CompositionAccumulator::default();
    let mut domains = DomainAccumulator::default();
    let skipped = Cell::new(0);
    let fatal = RefCell::new(None);
    for doc in Records::new(read_corpus(&inputs), &skipped, &fatal, ctx.quiet) {
        composition.add(&doc);
        domains.add(&doc, resolver);
    }
    check_fatal(&fatal)?;
    let composition = composition.report(pair);
    let domains = domains.report(a.top_k);
    ctx.progress(format!("{} documents", composition.total_documents));

    let human = format!("{}\n{}", composition.render_human(), domains.render_human());
    let machine = json!({"composition": composition, "domains": domains, "skipped_records": skipped.get()});
    deliver(format(&a.common, file), human, &machine, a.output.as_deref())?;
    let mut report = RunReport::new(
        "stats",
        json!({"pair": pair, "top_k": a.top_k, "suffix_list": a.suffix_list.as_ref().map(|p| p.display().to_string())}),
    );
    report.inputs = io::display(&inputs);
    report.outputs = a.output.iter().map(|p| p.display().to_string()).collect();
    report.summary = machine;
    finish_report(report, &a.common, a.output.as_deref())
}

fn read_generations(path: &Path) -> Result<Vec<Generation>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn genlang(a: GenlangArgs, ctx: &Ctx) -> Result<()> {
    let file = &ctx.file;
    let pair = file.pair(a.common.pair.as_deref())?;
    let mut thresholds = file.genlang;
    if let Some(t) = a.theta_target {
        thresholds.theta_target = t;
    }
    if let Some(t) = a.tau_mixed {
        thresholds.tau_mixed = t;
    }
    let (scorer, scorer_name) = Scorer::load(&a.scorer, file)?;
    let workers = workers(&a.common, file)?;
    let generations = read_generations(&a.input)?;
    let scorer_ref = scorer.get();
    let classes = workers.map(generations, |g| {
        analytics::classify_generation(&g.generated, pair, scorer_ref, &thresholds)
    });
    let mut acc = GenLangAccumulator::default();
    for c in classes {
        acc.add(c?);
    }
    let report_body = acc.report(pair);
    ctx.progress(format!("{} generations", report_body.sample_count));

    let machine = serde_json::to_value(&report_body)?;
    deliver(
        format(&a.common, file),
        report_body.render_human(),
        &machine,
        a.output.as_deref(),
    )?;
    let mut report = RunReport::new(
        "genlang",
        json!({"pair": pair, "scorer": scorer_name, "thresholds": thresholds}),
    );
    report.inputs = io::display(std::slice::from_ref(&a.input));
    report.outputs = a.output.iter().map(|p| p.display().to_string()).collect();
    report.summary = machine;
    finish_report(report, &a.common, a.output.as_deref())
}

fn load_layers(paths: &[PathBuf]) -> Result<Vec<EmbeddingMatrix>> {
    paths
        .iter()
        .map(|p| EmbeddingMatrix::load(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn align(a: AlignArgs, ctx: &Ctx) -> Result<()> {
    let file = &ctx.file;
    let src = load_layers(&a.src)?;
    let tgt = load_layers(&a.tgt)?;
    let granularity = src[0].granularity;
    if src.iter().chain(&tgt).any(|m| m.granularity != granularity) {
        bail!("all embedding files must share one granularity");
    }
    let run = align::layerwise_report(&src, &tgt, granularity)?;
    let deltas = if a.baseline_src.is_empty() {
        None
    } else {
        let bsrc = load_layers(&a.baseline_src)?;
        let btgt = load_layers(&a.baseline_tgt)?;
        let base = align::layerwise_report(&bsrc, &btgt, granularity)?;
        Some(align::delta_report(&run, &base)?)
    };
    ctx.progress(format!("{} layer(s)", run.layers.len()));
    let machine = json!({"alignment": run, "deltas": deltas});
    deliver(
        format(&a.common, file),
        run.render_human(deltas.as_deref()),
        &machine,
        a.output.as_deref(),
    )?;
    let mut report = RunReport::new("align", json!({"granularity": granularity}));
    report.inputs = io::display(&[a.src, a.tgt, a.baseline_src, a.baseline_tgt].concat());
    report.outputs = a.output.iter().map(|p| p.display().to_string()).collect();
    report.summary = machine;
    finish_report(report, &a.common, a.output.as_deref())
}

fn synth(a: SynthArgs, ctx: &Ctx) -> Result<()> {
    let file = &ctx.file;
    let pair = file.pair(a.common.pair.as_deref())?;
    let seed = a.seed.or(file.seed).unwrap_or(file.synth.seed);
    let mix = match a.mix.as_deref() {
        Some([x, y, z]) => Some([*x, *y, *z]),
        Some(_) => bail!("--mix takes three comma-separated shares"),
        None => None,
    };
    let (config_echo, summary) = match a.kind {
        SynthKind::Corpus => {
            let mut config: SynthConfig = file.synth.clone();
            config.seed = seed;
            if let Some(n) = a.documents {
                config.documents = n;
            }
            if let Some(r) = a.bilingual_rate {
                config.bilingual_rate = r;
            }
            if let Some(r) = a.out_of_pair_rate {
                config.out_of_pair_rate = r;
            }
            if let Some(m) = mix {
                config.category_mix = m;
            }
            let docs = synth::synth_corpus(pair, &config)?;
            write_corpus(&docs, &a.output, false)?;
            let planted: serde_json::Map<String, Value> = config
                .counts()
                .iter()
                .map(|(l, n)| (l.as_str().to_string(), json!(n)))
                .collect();
            (
                json!({"pair": pair, "kind": "corpus", "synth": config}),
                json!({"planted": planted}),
            )
        }
        SynthKind::Generations => {
            let count = a.documents.unwrap_or(1000);
            let mix = mix.unwrap_or([0.45, 0.5, 0.05]);
            let gens = synth::synth_generations(pair, count, mix, seed)?;
            let mut text = String::new();
            for g in &gens {
                text.push_str(&serde_json::to_string(g)?);
                text.push('\n');
            }
            io::write_text(&a.output, &text)?;
            let mut acc = GenLangAccumulator::default();
            for g in &gens {
                acc.add(g.planted);
            }
            (
                json!({"pair": pair, "kind": "generations", "count": count, "mix": mix, "seed": seed}),
                json!({"planted": acc.report(pair).counts}),
            )
        }
    };
    ctx.progress(format!("wrote {}", a.output.display()));
    let mut report = RunReport::new("synth", config_echo);
    report.outputs = io::display(std::slice::from_ref(&a.output));
    report.summary = summary.clone();
    finish_report(report, &a.common, Some(&a.output))?;
    let mut human = String::new();
    if let Some(planted) = summary["planted"].as_object() {
        for (k, v) in planted {
            let _ = writeln!(human, "{k:<16}{v:>10}");
        }
    }
    emit(format(&a.common, file), human, &summary);
    Ok(())
}

fn export_model(a: ExportModelArgs, ctx: &Ctx) -> Result<()> {
    LangIdModel::bundled().save(&a.output)?;
    ctx.progress(format!("wrote {}", a.output.display()));
    Ok(())
}
