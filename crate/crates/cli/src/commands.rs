use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use guiscout::bench::{compare_strategies, compute_metrics, evaluate_grounding, parse_predictions, BenchOptions};
use guiscout::dataset::{
    self as dataset, load_instructions, load_samples, write_instructions, write_manifest, CreationParams, DatasetManifest,
    DatasetRecorder, InstructionTemplates, QueryType, MANIFEST_FILE,
};
use guiscout::explorer::{run_exploration, write_run_log, Critic, ExplorerConfig, RunSpec, StrategyId};
use guiscout::llm::mock::{MockBehavior, MockServer};
use guiscout::llm::{RemoteSelector, SelectorConfig};
use guiscout::parser::{
    load_template_dir, parse_screen, GuiParser, HttpTextRecognizer, IconTemplate, NullTextRecognizer, OracleTextRecognizer,
    ParserConfig, TextRecognizer,
};
use guiscout::raster::Screenshot;
use guiscout::sim::{oracle_enumerate, render, EnvDefinition, SimEnv};

use crate::{BenchArgs, EvalGroundingArgs, ExploreArgs, ExplorerArgs, GenInstructionsArgs, ParseArgs, ParserArgs, SelectorArgs};

pub const RUN_LOG_FILE: &str = "run_log.jsonl";

fn parser_config(a: &ParserArgs) -> ParserConfig {
    ParserConfig { tau: a.tau, nms_overlap: a.nms_overlap, multiscale: a.multiscale, ..ParserConfig::default() }
}

fn explorer_config(a: &ExplorerArgs) -> ExplorerConfig {
    ExplorerConfig {
        action_kinds: a.action_kinds.clone(),
        dedup: a.dedup,
        critic: Critic::new(&a.error_patterns),
        text_dropout: a.text_dropout,
    }
}

/// Builds the selector client when an `llm_selector` run needs one. Without
/// an endpoint the bundled mock is started; keep the returned server alive
/// for as long as the selector is used.
fn selector_for(strategies: &[StrategyId], a: &SelectorArgs) -> Result<(Option<MockServer>, Option<RemoteSelector>)> {
    if !strategies.contains(&StrategyId::LlmSelector) {
        return Ok((None, None));
    }
    let (mock, endpoint) = match &a.selector_endpoint {
        Some(e) => (None, e.clone()),
        None => {
            let mock = MockServer::start(MockBehavior::FirstUnexplored).context("starting the mock selector")?;
            tracing::info!(url = %mock.url(), "no selector endpoint given, using the bundled mock");
            let url = mock.url();
            (Some(mock), url)
        }
    };
    let config = SelectorConfig {
        endpoint,
        token_env: a.selector_token_env.clone(),
        model: a.selector_model.clone(),
        timeout: Duration::from_millis(a.selector_timeout_ms),
        max_retries: a.selector_retries,
    };
    Ok((mock, Some(RemoteSelector::new(config)?)))
}

fn load_env(path: &Path) -> Result<Arc<EnvDefinition>> {
    Ok(Arc::new(EnvDefinition::load(path).with_context(|| format!("loading {}", path.display()))?))
}

fn ensure_empty_dir(dir: &Path) -> Result<()> {
    if dir.exists() && fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?.next().is_some() {
        bail!("output directory {} is not empty", dir.display());
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn explore(a: ExploreArgs) -> Result<ExitCode> {
    let def = load_env(&a.env)?;
    ensure_empty_dir(&a.out)?;
    let pcfg = parser_config(&a.parser);
    let config = explorer_config(&a.explorer);
    let parser = if a.strategy.uses_templates() {
        GuiParser::new(Arc::new(def.templates().to_vec()), pcfg)
    } else {
        GuiParser::text_only(pcfg)
    };
    let (_mock, selector) = selector_for(&[a.strategy], &a.selector)?;
    let spec = RunSpec {
        strategy: a.strategy,
        budget: a.budget,
        seed: a.seed,
        config: &config,
        parser: &parser,
        selector: selector.as_ref(),
    };
    let mut env = SimEnv::new(def.clone(), true);
    let mut recorder = DatasetRecorder::create(&a.out)?;
    let log_path = a.out.join(RUN_LOG_FILE);
    let run = match run_exploration(&mut env, spec, &mut recorder) {
        Ok(run) => run,
        Err(e) => {
            if let Some(partial) = e.partial() {
                write_run_log(&log_path, partial)?;
                eprintln!("partial run log written to {}", log_path.display());
            }
            eprintln!("error: exploration aborted: {e}");
            return Ok(ExitCode::FAILURE);
        }
    };
    write_run_log(&log_path, &run)?;
    let params = CreationParams {
        budget: a.budget,
        tau: pcfg.tau,
        nms_overlap: pcfg.nms_overlap,
        text_dropout: config.text_dropout.unwrap_or_else(|| a.strategy.default_text_dropout()),
        instruction_seed: None,
    };
    let manifest = write_manifest(&a.out, DatasetManifest::new(def.env_id(), a.strategy.as_str(), a.seed, params))?;

    let m = compute_metrics(&run, &oracle_enumerate(&def))?;
    let errors = run.error_records().count();
    println!("env {}  strategy {}  seed {}  budget {}", run.env_id, run.strategy_id, run.seed, run.budget);
    println!(
        "steps {}  trajectories {}  unique_actions {}  error_trajectories {}  completed {}",
        m.steps_used,
        run.trajectories.len(),
        m.unique_actions,
        errors,
        run.completed
    );
    println!(
        "element_coverage {:.4}  state_coverage {:.4}  unique_states {}",
        m.element_coverage, m.state_coverage, m.unique_states
    );
    println!("samples {}  written to {}", manifest.sample_count, a.out.display());
    Ok(ExitCode::SUCCESS)
}

/// Environment files of a suite directory, skipping manifests.
fn suite_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading suite {}", dir.display()))? {
        let p = entry?.path();
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.ends_with(".json") && !name.ends_with(".manifest.json") {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        bail!("no environment files in {}", dir.display());
    }
    Ok(out)
}

pub fn bench(a: BenchArgs) -> Result<ExitCode> {
    let paths = if a.env.is_empty() { suite_files(&a.suite)? } else { a.env.clone() };
    let defs = paths.iter().map(|p| load_env(p)).collect::<Result<Vec<_>>>()?;
    let mut ids = BTreeSet::new();
    for d in &defs {
        if !ids.insert(d.env_id()) {
            bail!("env id `{}` given twice", d.env_id());
        }
    }
    let mut strategies = a.strategies.clone();
    strategies.dedup();
    ensure_empty_dir(&a.out)?;
    let (_mock, selector) = selector_for(&strategies, &a.selector)?;
    let options = BenchOptions {
        budget: a.budget,
        explorer: explorer_config(&a.explorer),
        parser: parser_config(&a.parser),
        selector,
        jobs: a.jobs,
    };
    let (report, outcomes) = compare_strategies(&defs, &strategies, &a.seeds.0, &options);

    for o in &outcomes {
        if let Ok(run) = &o.run {
            let dir = a.out.join("runs").join(&o.env_id);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            write_run_log(&dir.join(format!("{}-seed{}.jsonl", o.strategy, o.seed)), run)?;
        }
    }
    let text = report.to_text();
    write_file(&a.out.join("report.json"), report.to_json())?;
    write_file(&a.out.join("report.txt"), &text)?;
    print!("{text}");
    let failed = report.failed_cells();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see report.json", report.cells.len());
    }
    Ok(if !report.cells.is_empty() && failed == report.cells.len() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

pub fn parse(a: ParseArgs) -> Result<ExitCode> {
    let config = parser_config(&a.parser);
    let parsed = match (&a.image, &a.env_file, &a.state) {
        (Some(image), _, _) => {
            let shot = Screenshot::load_png(image).with_context(|| format!("reading {}", image.display()))?;
            let templates: Vec<IconTemplate> = match &a.templates {
                Some(dir) => load_template_dir(dir)?,
                None => Vec::new(),
            };
            let text: Box<dyn TextRecognizer> = match &a.text_endpoint {
                Some(url) => Box::new(HttpTextRecognizer::new(url.clone(), Duration::from_secs(30))?),
                None => Box::new(NullTextRecognizer),
            };
            parse_screen(&shot, &templates, text.as_ref(), &config)?
        }
        (None, Some(env_file), Some(state_id)) => {
            let def = load_env(env_file)?;
            let Some(state) = def.state(state_id) else {
                bail!("{} has no state `{state_id}`", def.env_id());
            };
            let shot = Screenshot::from_rgb(render(&state.def, &def));
            let text = OracleTextRecognizer::new(state.truth(), a.text_dropout, a.seed)?;
            parse_screen(&shot, def.templates(), &text, &config)?
        }
        _ => bail!("give either --image or --env with --state"),
    };
    let json = serde_json::to_string_pretty(&parsed)? + "\n";
    match &a.out {
        Some(p) => write_file(p, json)?,
        None => print!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn gen_instructions(a: GenInstructionsArgs) -> Result<ExitCode> {
    let types = a.types.iter().map(|t| t.parse::<QueryType>().map_err(anyhow::Error::msg)).collect::<Result<Vec<_>>>()?;
    if !a.dataset.join(MANIFEST_FILE).exists() {
        bail!("{} has no {MANIFEST_FILE}; run `explore` first", a.dataset.display());
    }
    let mut manifest = DatasetManifest::load(&a.dataset)?;
    let samples = load_samples(&a.dataset)?;
    let (instructions, skipped) = dataset::gen_instructions(&samples, &types, &InstructionTemplates::default(), a.seed);
    write_instructions(&a.dataset, &instructions)?;
    manifest.skipped_counts = skipped;
    manifest.params.instruction_seed = Some(a.seed);
    let manifest = write_manifest(&a.dataset, manifest)?;
    let mut line = format!("{} instructions from {} samples:", instructions.len(), samples.len());
    for (t, n) in &manifest.instruction_counts {
        let _ = write!(line, " {t}={n}");
    }
    println!("{line}");
    Ok(ExitCode::SUCCESS)
}

pub fn eval_grounding(a: EvalGroundingArgs) -> Result<ExitCode> {
    let gt = load_instructions(&a.instructions)?;
    let text = fs::read_to_string(&a.predictions).with_context(|| format!("reading {}", a.predictions.display()))?;
    let preds = parse_predictions(&text).with_context(|| format!("in {}", a.predictions.display()))?;
    let result = evaluate_grounding(&preds, &gt)?;
    let o = result.overall;
    println!("accuracy {:.4} ({}/{})  missing {}", o.accuracy, o.correct, o.total, result.missing);
    for (t, acc) in &result.per_type {
        println!("  {t:<9} {:.4} ({}/{})", acc.accuracy, acc.correct, acc.total);
    }
    for (k, acc) in &result.per_kind {
        println!("  {k:<9} {:.4} ({}/{})", acc.accuracy, acc.correct, acc.total);
    }
    if let Some(p) = &a.out {
        write_file(p, serde_json::to_string_pretty(&result)? + "\n")?;
    }
    Ok(ExitCode::SUCCESS)
}
