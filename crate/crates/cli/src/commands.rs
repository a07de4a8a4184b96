use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use cxreval_core::corpus::{csv_headers, load_binary_labels, load_corpus, ColumnMap};
use cxreval_core::labeler::Labeler;
use cxreval_core::metrics::{render_markdown, BootstrapConfig, EvalConfig};
use cxreval_core::normalizer::llm::{llm_refine_many, HttpTransport};
use cxreval_core::normalizer::{RefineEndpointConfig, Refiner};
use cxreval_core::study::{RatingsLog, SessionConfig};
use cxreval_core::{
    analyze_session, create_session, evaluate, extract_sections, Corpus, ExclusionConfig, Finding,
    Lexicon, RefinementRules, StudySession,
};
use serde_json::{json, Value};

use crate::args::{
    Cli, Command, EvalArgs, InputFormat, LabelArgs, Preset, RefineArgs, StudyAnalyzeArgs,
    StudyCommand, StudyCreateArgs, StudyServeArgs,
};
use crate::manifest::RunManifest;
use crate::{server, CliError};

pub(crate) fn dispatch(cli: &Cli, command_line: Vec<String>) -> Result<(), CliError> {
    let started = Utc::now();
    match &cli.command {
        Command::Label(a) => label(
            cli,
            a,
            RunManifest::new(command_line, Value::Null, cli.seed, started),
        ),
        Command::Refine(a) => refine(
            cli,
            a,
            RunManifest::new(command_line, Value::Null, cli.seed, started),
        ),
        Command::Eval(a) => eval(
            cli,
            a,
            RunManifest::new(command_line, Value::Null, cli.seed, started),
        ),
        Command::Study(StudyCommand::Create(a)) => study_create(
            cli,
            a,
            RunManifest::new(command_line, Value::Null, cli.seed, started),
        ),
        Command::Study(StudyCommand::Serve(a)) => study_serve(a),
        Command::Study(StudyCommand::Analyze(a)) => study_analyze(
            cli,
            a,
            RunManifest::new(command_line, Value::Null, cli.seed, started),
        ),
    }
}

fn lexicon(cli: &Cli) -> Result<Lexicon, CliError> {
    match &cli.lexicon {
        Some(path) => Lexicon::load(path).map_err(|e| CliError::data(path.display(), e)),
        None => Ok(Lexicon::default()),
    }
}

fn out_dir(cli: &Cli) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    Ok(&cli.out)
}

fn corpus(path: &Path) -> Result<Corpus, CliError> {
    load_corpus(path).map_err(|e| CliError::data(path.display(), e))
}

struct Jsonl {
    path: PathBuf,
    w: BufWriter<File>,
}

impl Jsonl {
    fn create(path: PathBuf) -> Result<Self, CliError> {
        let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Jsonl {
            w: BufWriter::new(f),
            path,
        })
    }

    fn line(&mut self, v: &Value) -> Result<(), CliError> {
        serde_json::to_writer(&mut self.w, v)
            .map_err(|e| CliError::data(self.path.display(), e))?;
        self.w
            .write_all(b"\n")
            .map_err(|e| CliError::io(&self.path, e))
    }

    fn finish(mut self) -> Result<PathBuf, CliError> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

fn write_text(path: PathBuf, text: &str) -> Result<PathBuf, CliError> {
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn label(cli: &Cli, a: &LabelArgs, mut manifest: RunManifest) -> Result<(), CliError> {
    let lex = lexicon(cli)?;
    let corpus = corpus(&a.input)?;
    let labeler = Labeler::new(&lex);
    use rayon::prelude::*;
    let vectors = corpus
        .records
        .par_iter()
        .map(|r| {
            let report = extract_sections(&r.id, &r.text).map_err(|e| CliError::data(&r.id, e))?;
            labeler.label(&report).map_err(|e| CliError::data(&r.id, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let out = out_dir(cli)?;
    let mut w = Jsonl::create(out.join("labels.jsonl"))?;
    for (r, v) in corpus.records.iter().zip(&vectors) {
        let mut line = json!({ "id": r.id, "labels": v.to_output_map() });
        if a.provenance {
            line["provenance"] =
                serde_json::to_value(&v.provenance).expect("provenance serializes");
        }
        w.line(&line)?;
    }
    let labels_path = w.finish()?;
    manifest.config = json!({ "provenance": a.provenance, "lexicon": cli.lexicon });
    manifest.input(&a.input)?;
    if let Some(p) = &cli.lexicon {
        manifest.input(p)?;
    }
    manifest.output(&labels_path)?;
    manifest.write(out)?;
    eprintln!(
        "labelled {} reports -> {}",
        vectors.len(),
        labels_path.display()
    );
    Ok(())
}

fn refine(cli: &Cli, a: &RefineArgs, manifest: RunManifest) -> Result<(), CliError> {
    if a.llm {
        refine_llm(cli, a, manifest)
    } else {
        refine_rules(cli, a, manifest)
    }
}

fn refine_rules(cli: &Cli, a: &RefineArgs, mut manifest: RunManifest) -> Result<(), CliError> {
    let corpus = corpus(&a.input)?;
    let rules = RefinementRules::default();
    let refiner = Refiner::new(&rules);
    let out = out_dir(cli)?;
    let mut refined = Jsonl::create(out.join("refined.jsonl"))?;
    let mut audit = Jsonl::create(out.join("refine_audit.jsonl"))?;
    let mut emptied = 0;
    for r in &corpus.records {
        let report = extract_sections(&r.id, &r.text).map_err(|e| CliError::data(&r.id, e))?;
        let result = refiner.refine(&report);
        let mut record = r.clone();
        record.text = result.report.to_text();
        if record.text.trim().is_empty() {
            emptied += 1;
        }
        refined.line(&serde_json::to_value(&record).expect("record serializes"))?;
        audit.line(&result.audit_json())?;
    }
    let refined_path = refined.finish()?;
    let audit_path = audit.finish()?;
    if emptied > 0 {
        eprintln!("warning: {emptied} reports are empty after refinement");
    }
    manifest.config = serde_json::to_value(&rules).expect("rules serialize");
    manifest.input(&a.input)?;
    manifest.output(&refined_path)?;
    manifest.output(&audit_path)?;
    manifest.write(out)?;
    eprintln!(
        "refined {} reports -> {}",
        corpus.len(),
        refined_path.display()
    );
    Ok(())
}

fn refine_llm(cli: &Cli, a: &RefineArgs, mut manifest: RunManifest) -> Result<(), CliError> {
    let (Some(endpoint), Some(model)) = (&a.endpoint, &a.model) else {
        return Err(CliError::Usage(
            "--llm requires --endpoint and --model".into(),
        ));
    };
    let config = RefineEndpointConfig {
        base_url: endpoint.clone(),
        model: model.clone(),
        timeout_secs: a.timeout_secs,
        token_env: a.token_env.clone(),
        qa: a.qa,
    };
    let corpus = corpus(&a.input)?;
    let reports = corpus
        .records
        .iter()
        .map(|r| extract_sections(&r.id, &r.text).map_err(|e| CliError::data(&r.id, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let results = llm_refine_many(&reports, &config, &HttpTransport, a.max_in_flight);
    let out = out_dir(cli)?;
    let mut w = Jsonl::create(out.join("llm_refined.jsonl"))?;
    let mut failed = 0;
    for (report, result) in reports.iter().zip(&results) {
        let line = match result {
            Ok(r) => {
                let mut v = serde_json::to_value(&r.refined).expect("refined serializes");
                v["id"] = json!(r.id);
                v["warnings"] = json!(r.warnings);
                v
            }
            Err(e) => {
                failed += 1;
                eprintln!("error: {}: {e}", report.id);
                json!({ "id": report.id, "error": e.to_string() })
            }
        };
        w.line(&line)?;
    }
    let path = w.finish()?;
    manifest.config = json!({
        "base_url": config.base_url,
        "model": config.model,
        "timeout_secs": config.timeout_secs,
        "token_env": config.token_env,
        "qa": config.qa,
        "max_in_flight": a.max_in_flight,
    });
    manifest.input(&a.input)?;
    manifest.output(&path)?;
    manifest.write(out)?;
    if failed > 0 {
        return Err(CliError::Data(format!(
            "{failed} of {} reports failed",
            reports.len()
        )));
    }
    Ok(())
}

fn exclusion_config(a: &EvalArgs) -> Result<ExclusionConfig, CliError> {
    let mut cfg = match a.preset {
        Preset::MimicChexpert => ExclusionConfig::mimic_chexpert(),
        Preset::Indiana => ExclusionConfig::indiana(),
    };
    if let Some(n) = a.min_class_count {
        cfg.min_class_count = n;
    }
    if let Some(f) = a.min_class_fraction {
        cfg.min_class_fraction = Some(f);
    }
    if a.no_fraction_rule {
        cfg.min_class_fraction = None;
    }
    if !a.exclude.is_empty() {
        let mut names = BTreeSet::new();
        for name in &a.exclude {
            if name == "none" {
                continue;
            }
            let f: Finding = name
                .parse()
                .map_err(|e| CliError::Usage(format!("--exclude: {e}")))?;
            names.insert(f);
        }
        cfg.name_excluded = names;
    }
    cfg.validate()
        .map_err(|e| CliError::Usage(format!("--min-class-fraction: {e}")))?;
    Ok(cfg)
}

fn column_map(a: &EvalArgs) -> Result<ColumnMap, CliError> {
    if a.columns.is_empty() {
        let headers = csv_headers(&a.gt).map_err(|e| CliError::data(a.gt.display(), e))?;
        let refs: Vec<&str> = headers.iter().map(String::as_str).collect();
        return Ok(ColumnMap::auto(&a.id_column, &refs));
    }
    let mut columns = Vec::new();
    for spec in &a.columns {
        let (header, finding) = spec.rsplit_once('=').ok_or_else(|| {
            CliError::Usage(format!("--column `{spec}`: expected HEADER=FINDING"))
        })?;
        let f: Finding = finding
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("--column `{spec}`: {e}")))?;
        columns.push((header.to_string(), f));
    }
    Ok(ColumnMap {
        id_column: a.id_column.clone(),
        columns,
    })
}

fn eval(cli: &Cli, a: &EvalArgs, mut manifest: RunManifest) -> Result<(), CliError> {
    let seed = cli
        .seed
        .ok_or_else(|| CliError::Usage("--seed is required for eval".into()))?;
    if a.iterations == 0 {
        return Err(CliError::Usage("--iterations must be at least 1".into()));
    }
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(CliError::Usage(format!(
            "--level must be in (0, 1), got {}",
            a.level
        )));
    }
    let config = EvalConfig {
        exclusion: exclusion_config(a)?,
        bootstrap: BootstrapConfig {
            iterations: a.iterations,
            seed,
            level: a.level,
        },
    };
    let lex = lexicon(cli)?;
    let gt = match a.gt_format {
        InputFormat::Jsonl => corpus(&a.gt)?,
        InputFormat::Csv => {
            let map = column_map(a)?;
            if map.columns.is_empty() {
                return Err(CliError::data(
                    a.gt.display(),
                    "no CSV header names a finding; use --column",
                ));
            }
            load_binary_labels(&a.gt, &map).map_err(|e| CliError::data(a.gt.display(), e))?
        }
    };
    let pred = corpus(&a.pred)?;
    let report = evaluate(&gt, &pred, &lex, &config).map_err(|e| CliError::data("eval", e))?;

    let out = out_dir(cli)?;
    let metrics = write_text(
        out.join("metrics.json"),
        &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
    )?;
    let table = write_text(out.join("table.md"), &render_markdown(&report))?;
    manifest.config = serde_json::to_value(&config).expect("config serializes");
    manifest.input(&a.gt)?;
    manifest.input(&a.pred)?;
    if let Some(p) = &cli.lexicon {
        manifest.input(p)?;
    }
    manifest.output(&metrics)?;
    manifest.output(&table)?;
    manifest.write(out)?;
    eprintln!(
        "{} pairs, {} labels scored -> {}",
        report.n_pairs,
        report.per_label.len(),
        metrics.display()
    );
    Ok(())
}

fn study_create(cli: &Cli, a: &StudyCreateArgs, mut manifest: RunManifest) -> Result<(), CliError> {
    let seed = cli
        .seed
        .ok_or_else(|| CliError::Usage("--seed is required for study create".into()))?;
    let created_at = match &a.created_at {
        Some(s) => DateTime::parse_from_rfc3339(s)
            .map_err(|e| CliError::Usage(format!("--created-at: {e}")))?
            .with_timezone(&Utc),
        None => Utc::now(),
    };
    let corpus = corpus(&a.corpus)?;
    let config = SessionConfig {
        n_abnormal: a.n_abnormal,
        n_normal: a.n_normal,
        raters: a.raters.clone(),
        seed,
        created_at,
    };
    let session =
        create_session(&corpus, &config).map_err(|e| CliError::data(a.corpus.display(), e))?;
    let out = out_dir(cli)?;
    let path = out.join("session.json");
    session
        .save(&path)
        .map_err(|e| CliError::data(path.display(), e))?;
    manifest.config = json!({
        "n_abnormal": a.n_abnormal,
        "n_normal": a.n_normal,
        "raters": a.raters,
        "created_at": created_at,
    });
    manifest.input(&a.corpus)?;
    manifest.output(&path)?;
    manifest.write(out)?;
    eprintln!(
        "session {}: {} items, {} expected ratings -> {}",
        session.session_id,
        session.total_items(),
        session.expected_ratings(),
        path.display()
    );
    eprintln!("note: the session file holds the condition map; keep it away from raters");
    Ok(())
}

fn ratings_path(session: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| session.with_file_name("ratings.jsonl"))
}

fn load_session(path: &Path) -> Result<StudySession, CliError> {
    StudySession::load(path).map_err(|e| CliError::data(path.display(), e))
}

fn study_serve(a: &StudyServeArgs) -> Result<(), CliError> {
    let session = load_session(&a.session)?;
    let ratings = ratings_path(&a.session, &a.ratings);
    let log = RatingsLog::open(&ratings).map_err(|e| CliError::data(ratings.display(), e))?;
    if !a.images.is_dir() {
        return Err(CliError::data(a.images.display(), "not a directory"));
    }
    let state = server::AppState::new(session, log, a.images.clone(), a.ui.clone());
    let addr = format!("{}:{}", a.host, a.port);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::data("runtime", e))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::data(&addr, e))?;
        eprintln!(
            "serving on http://{addr} (ratings -> {})",
            ratings.display()
        );
        axum::serve(listener, server::router(state))
            .await
            .map_err(|e| CliError::data("server", e))
    })
}

fn study_analyze(
    cli: &Cli,
    a: &StudyAnalyzeArgs,
    mut manifest: RunManifest,
) -> Result<(), CliError> {
    let session = load_session(&a.session)?;
    let ratings = ratings_path(&a.session, &a.ratings);
    if !ratings.is_file() {
        return Err(CliError::data(ratings.display(), "ratings log not found"));
    }
    let log = RatingsLog::open(&ratings).map_err(|e| CliError::data(ratings.display(), e))?;
    let summary = analyze_session(&session, log.entries())
        .map_err(|e| CliError::data(ratings.display(), e))?;
    let out = out_dir(cli)?;
    let json_path = write_text(
        out.join("summary.json"),
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;
    let md_path = write_text(out.join("summary.md"), &summary.to_markdown())?;
    manifest.config = json!({ "session_id": session.session_id });
    manifest.input(&a.session)?;
    manifest.input(&ratings)?;
    manifest.output(&json_path)?;
    manifest.output(&md_path)?;
    manifest.write(out)?;
    print!("{}", summary.to_markdown());
    Ok(())
}
