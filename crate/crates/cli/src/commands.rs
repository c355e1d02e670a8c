//! Subcommand implementations. Every artifact-producing command writes a
//! `manifest.json` next to its outputs; only its `volatile` field varies
//! between identical runs.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use apiplan_core::agent::{latency_summary, run_benchmark, Agent};
use apiplan_core::client::{ApiClient, LocalClient};
use apiplan_core::corpus::{generate_corpus, Corpus};
use apiplan_core::eval::{
    aggregate, classify_external, format_csv, format_table, grade, score_from_acc, EvalReport, EvalWeights,
    ExternalTranscript, GradedItem, BASELINE_SOLUTION_RULE,
};
use apiplan_core::forge::{self, export_dataset, read_triplets, ExportOptions, ForgeConfig, SynthesisMode, Triplet};
use apiplan_core::graph::{build_graph, entry_apis, LinkPolicy};
use apiplan_core::llm::{default_extract_prompt, open_backend, render_prompts, BackendConfig, BackendKind, LlmBackend};
use apiplan_core::plan::Limits;
use apiplan_core::registry::{default_library, load_registry, validate_library, ApiLibrary};
use apiplan_core::solutions::{build_library, enumerate_solutions, is_valid, SolutionLibrary, StructuralJudge};
use apiplan_core::util::{canonical_json, pretty_json};
use apiplan_service::HttpClient;
use serde_json::{json, Value};

use crate::cli::*;
use crate::config::{existing, RunConfig};

const DEFAULT_SEED: u64 = 42;

fn timestamp() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("{secs}")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig, default: &str) -> Result<PathBuf> {
    let dir = flag.unwrap_or_else(|| cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")).join(default));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_manifest(dir: &Path, command: &str, body: Value) -> Result<()> {
    let mut m = json!({ "command": command, "volatile": { "timestamp": timestamp() } });
    if let (Value::Object(m), Value::Object(b)) = (&mut m, body) {
        m.extend(b);
    }
    write(&dir.join("manifest.json"), &pretty_json(&m))
}

fn policy(p: Policy) -> LinkPolicy {
    match p {
        Policy::EntityId => LinkPolicy::EntityId,
        Policy::Linkable => LinkPolicy::Linkable,
        Policy::Raw => LinkPolicy::Raw,
    }
}

fn load_apis(args: &RegistryArgs, cfg: &RunConfig) -> Result<ApiLibrary> {
    let lib = match args.registry.clone().or_else(|| cfg.registry.clone()) {
        Some(path) => {
            let text =
                std::fs::read_to_string(&path).with_context(|| format!("reading registry {}", path.display()))?;
            load_registry(&text).with_context(|| format!("loading registry {}", path.display()))?
        }
        None => default_library(),
    };
    for f in validate_library(&lib).findings {
        eprintln!("warning: {}{}: {}", f.api, f.attribute.map(|a| format!(".{a}")).unwrap_or_default(), f.message);
    }
    Ok(lib)
}

fn library(apis: &ApiLibrary, p: LinkPolicy, hops: usize) -> Result<SolutionLibrary> {
    Ok(build_library(&build_graph(apis, p), hops, &StructuralJudge::new(apis))?)
}

fn load_corpus(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<Arc<Corpus>> {
    let path = existing(flag.or_else(|| cfg.snapshot.clone()), "snapshot")?;
    Ok(Arc::new(Corpus::load(&path).with_context(|| format!("loading snapshot {}", path.display()))?))
}

fn backend_config(args: &BackendArgs, cfg: &RunConfig) -> BackendConfig {
    let mut b = cfg.backend.clone().apply_env();
    match args.backend {
        Some(BackendChoice::Stub) => b.kind = BackendKind::Stub,
        Some(BackendChoice::Remote) => b.kind = BackendKind::RemoteChat,
        None => {}
    }
    if args.stub_fixtures.is_some() {
        b.stub_fixtures = args.stub_fixtures.clone();
    }
    if args.endpoint.is_some() {
        b.endpoint = args.endpoint.clone();
    }
    if args.model.is_some() {
        b.model = args.model.clone();
    }
    if args.cache_dir.is_some() {
        b.cache_dir = args.cache_dir.clone();
    }
    b
}

fn weights(flag: Option<Vec<f64>>, cfg: &RunConfig) -> Result<EvalWeights> {
    match flag.or_else(|| cfg.weights.clone()) {
        Some(ws) => Ok(EvalWeights::from_list(&ws)?),
        None => Ok(EvalWeights::default()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Graph(GraphCmd::Build { registry, out }) => graph_build(&registry, out, &cfg),
        Command::Solutions(SolutionsCmd::Enumerate { registry, hops, out }) => {
            solutions_enumerate(&registry, hops.or(cfg.hops).unwrap_or(3), out, &cfg)
        }
        Command::Corpus(CorpusCmd::Generate { seed, scholars, pubs, out }) => {
            corpus_generate(seed.or(cfg.seed).unwrap_or(DEFAULT_SEED), scholars, pubs, out, &cfg)
        }
        Command::Serve(a) => serve(a, &cfg),
        Command::Forge(ForgeCmd::Dataset {
            registry,
            snapshot,
            service,
            seed,
            hops,
            instantiations,
            split_ratio,
            mode,
            out,
        }) => {
            let fc = ForgeConfig {
                seed: seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
                max_hops: hops.or(cfg.hops).unwrap_or(3),
                instantiations: instantiations.or(cfg.instantiations).unwrap_or(forge::DEFAULT_INSTANTIATIONS),
                split_ratio: split_ratio.or(cfg.split_ratio).unwrap_or(forge::DEFAULT_SPLIT_RATIO),
                mode: match mode {
                    Mode::Builtin => SynthesisMode::Builtin,
                    Mode::Llm => SynthesisMode::Llm,
                },
                link_policy: policy(registry.policy),
            };
            forge_dataset(&registry, snapshot, service, fc, out, &cfg)
        }
        Command::Agent(AgentCmd::Run {
            registry,
            dataset,
            train,
            snapshot,
            service,
            backend,
            hops,
            seed,
            exemplars,
            parallelism,
            max_calls,
            limit,
            out,
        }) => agent_run(AgentRun {
            registry,
            dataset,
            train,
            snapshot,
            service,
            backend: backend_config(&backend, &cfg),
            hops: hops.or(cfg.hops).unwrap_or(3),
            seed: seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
            exemplars,
            parallelism,
            limits: Limits { max_calls },
            limit,
            out,
            cfg: &cfg,
        }),
        Command::Eval(EvalCmd::Grade { transcripts, gold, external, backend, weights: w, format, out }) => {
            let backend = external.then(|| backend_config(&backend, &cfg));
            eval_grade(&transcripts, &gold, backend, weights(w, &cfg)?, format, out)
        }
        Command::Eval(EvalCmd::Score { acc, weights: w }) => {
            let w = weights(w, &cfg)?;
            let acc: BTreeMap<usize, f64> = acc.iter().enumerate().map(|(i, &a)| (i + 1, a)).collect();
            let score = score_from_acc(&acc, &w).context("no accuracies given")?;
            println!("{score:.2}");
            Ok(())
        }
    }
}

fn graph_build(args: &RegistryArgs, out: Option<PathBuf>, cfg: &RunConfig) -> Result<()> {
    let apis = load_apis(args, cfg)?;
    let g = build_graph(&apis, policy(args.policy));
    let dir = out_dir(out, cfg, "graph")?;
    write(&dir.join("graph.json"), &(g.to_json() + "\n"))?;
    write(&dir.join("graph.dot"), &g.to_dot())?;
    let entries = entry_apis(&g);
    write_manifest(
        &dir,
        "graph build",
        json!({ "nodes": g.nodes.len(), "edges": g.edges.len(), "entries": entries, "outputs": ["graph.json", "graph.dot"] }),
    )?;
    println!("{} nodes, {} edges, entries: {}", g.nodes.len(), g.edges.len(), entries.join(", "));
    Ok(())
}

fn solutions_enumerate(args: &RegistryArgs, hops: usize, out: Option<PathBuf>, cfg: &RunConfig) -> Result<()> {
    let apis = load_apis(args, cfg)?;
    let g = build_graph(&apis, policy(args.policy));
    let paths = enumerate_solutions(&g, hops)?;
    let valid = paths.iter().filter(|p| is_valid(p, &g).unwrap_or(false)).count();
    let lib = library(&apis, policy(args.policy), hops)?;
    let dir = out_dir(out, cfg, "solutions")?;
    write(&dir.join("paths.json"), &pretty_json(&paths))?;
    write(&dir.join("library.json"), &(lib.to_json() + "\n"))?;
    write_manifest(
        &dir,
        "solutions enumerate",
        json!({ "hops": hops, "paths": paths.len(), "valid": valid, "library": lib.len(), "outputs": ["paths.json", "library.json"] }),
    )?;
    println!("{} paths up to {hops} hops, {} concise solutions:", paths.len(), lib.len());
    for s in lib.iter() {
        println!("  {}", s.key());
    }
    Ok(())
}

fn corpus_generate(seed: u64, scholars: usize, pubs: usize, out: Option<PathBuf>, cfg: &RunConfig) -> Result<()> {
    let corpus = generate_corpus(seed, scholars, pubs)?;
    let dir = out_dir(out, cfg, "corpus")?;
    corpus.save(&dir.join("corpus.json"))?;
    write_manifest(
        &dir,
        "corpus generate",
        json!({ "seed": seed, "scholars": scholars, "publications": pubs, "snapshot_id": corpus.snapshot_id, "outputs": ["corpus.json"] }),
    )?;
    println!("snapshot {} written to {}", corpus.snapshot_id, dir.join("corpus.json").display());
    Ok(())
}

fn serve(a: ServeArgs, cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(a.snapshot, cfg)?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .with_context(|| format!("bad listen address {}:{}", a.host, a.port))?;
    let id = corpus.snapshot_id.clone();
    apiplan_service::serve_forever(corpus, addr, |bound| {
        println!("serving snapshot {id} on http://{bound}");
    })
    .context("server failed")
}

fn remote_client(url: &str, expect_snapshot: Option<&str>) -> Result<HttpClient> {
    let c = HttpClient::new(url, Duration::from_secs(30))?;
    let id = c.snapshot_id().with_context(|| format!("contacting service {url}"))?;
    if let Some(want) = expect_snapshot {
        if id != want {
            bail!("service {url} serves snapshot {id}, expected {want}");
        }
    }
    Ok(c)
}

fn forge_dataset(
    args: &RegistryArgs,
    snapshot: Option<PathBuf>,
    service: Option<String>,
    fc: ForgeConfig,
    out: Option<PathBuf>,
    cfg: &RunConfig,
) -> Result<()> {
    let apis = load_apis(args, cfg)?;
    let corpus = load_corpus(snapshot, cfg)?;
    let llm: Option<Box<dyn LlmBackend>> = match fc.mode {
        SynthesisMode::Llm => Some(open_backend(&cfg.backend.clone().apply_env())?),
        SynthesisMode::Builtin => None,
    };
    let run = forge::forge(&fc, &apis, corpus.clone(), llm.as_deref())?;
    let dir = out_dir(out, cfg, "dataset")?;
    let opts = ExportOptions {
        out_dir: dir.clone(),
        seed: fc.seed,
        split_ratio: fc.split_ratio,
        snapshot_id: corpus.snapshot_id.clone(),
        solutions: run.library.len(),
        combinations: run.combinations.len(),
        timestamp: Some(timestamp()),
    };
    let client: Box<dyn ApiClient> = match &service {
        Some(url) => Box::new(remote_client(url, Some(&corpus.snapshot_id))?),
        None => Box::new(LocalClient::new(corpus.clone())),
    };
    let manifest = export_dataset(run.triplets, &opts, &apis, client.as_ref())?;
    write(&dir.join("combinations.json"), &pretty_json(&run.combinations))?;
    write(&dir.join("templates.json"), &pretty_json(&run.templates))?;
    println!(
        "{} solutions, {} combinations, {} records ({} train / {} test), {} skipped",
        manifest.solutions, manifest.combinations, manifest.total, manifest.train, manifest.test, run.skipped
    );
    if !run.excluded.is_empty() {
        println!("{} records failed verification and were dropped", run.excluded.len());
    }
    Ok(())
}

struct AgentRun<'a> {
    registry: RegistryArgs,
    dataset: PathBuf,
    train: PathBuf,
    snapshot: Option<PathBuf>,
    service: Option<String>,
    backend: BackendConfig,
    hops: usize,
    seed: u64,
    exemplars: usize,
    parallelism: usize,
    limits: Limits,
    limit: Option<usize>,
    out: Option<PathBuf>,
    cfg: &'a RunConfig,
}

fn agent_run(a: AgentRun<'_>) -> Result<()> {
    let apis = load_apis(&a.registry, a.cfg)?;
    let solutions = library(&apis, policy(a.registry.policy), a.hops)?;
    let mut dataset = read_triplets(&existing(Some(a.dataset.clone()), "dataset")?)?;
    if let Some(n) = a.limit {
        dataset.truncate(n);
    }
    let train = read_triplets(&existing(Some(a.train.clone()), "training set")?)?;
    let bundle = render_prompts(&solutions, &apis, &train, a.exemplars, a.seed)?;
    let backend = open_backend(&a.backend)?;
    let client: Box<dyn ApiClient> = match (&a.service, a.snapshot.clone().or_else(|| a.cfg.snapshot.clone())) {
        (Some(url), _) => Box::new(remote_client(url, None)?),
        (None, snap) => Box::new(LocalClient::new(load_corpus(snap, a.cfg)?)),
    };
    let agent = Agent {
        bundle: &bundle,
        solutions: &solutions,
        apis: &apis,
        backend: backend.as_ref(),
        client: client.as_ref(),
        limits: a.limits,
    };
    let transcripts = run_benchmark(&agent, &dataset, a.parallelism);

    let dir = out_dir(a.out, a.cfg, "run")?;
    let body: String = transcripts.iter().map(|t| canonical_json(t) + "\n").collect();
    write(&dir.join("transcripts.jsonl"), &body)?;
    write(&dir.join("prompts.json"), &pretty_json(&bundle))?;
    let per_query: Vec<Value> = transcripts.iter().map(|t| json!({ "id": t.id, "timings": t.timings })).collect();
    let summary = latency_summary(&transcripts);
    write(&dir.join("timings.json"), &pretty_json(&json!({ "summary": summary, "queries": per_query })))?;
    let failed = transcripts.iter().filter(|t| t.execution_error).count();
    write_manifest(
        &dir,
        "agent run",
        json!({
            "seed": a.seed,
            "backend": backend.id(),
            "records": transcripts.len(),
            "execution_errors": failed,
            "exemplars": a.exemplars,
            "max_calls": a.limits.max_calls,
            "flagged_solutions": bundle.flagged,
            "outputs": ["transcripts.jsonl", "prompts.json", "timings.json"],
        }),
    )?;
    println!(
        "{} queries, {} execution errors, {:.1} LLM calls per query, {:.2} ms mean execution",
        transcripts.len(),
        failed,
        summary.mean_llm_calls,
        summary.mean_execution_ms
    );
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

fn grade_external(
    ts: &[ExternalTranscript],
    gold: &[Triplet],
    backend: &BackendConfig,
    w: &EvalWeights,
) -> Result<EvalReport> {
    let llm = if backend.stub_fixtures.is_some() || backend.kind == BackendKind::RemoteChat {
        Some(open_backend(backend)?)
    } else {
        None
    };
    let by_id: BTreeMap<&str, &Triplet> = gold.iter().map(|t| (t.id.as_str(), t)).collect();
    let prompt = default_extract_prompt();
    let items = ts
        .iter()
        .map(|t| {
            let g = by_id.get(t.id.as_str()).with_context(|| format!("no gold record for {}", t.id))?;
            Ok(GradedItem {
                outcome: classify_external(t, g, &prompt, llm.as_deref()),
                hop: g.hop,
                template_id: g.template_id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = aggregate(&items, w);
    report.notes.push(BASELINE_SOLUTION_RULE.to_string());
    Ok(report)
}

fn eval_grade(
    transcripts: &Path,
    gold: &Path,
    external: Option<BackendConfig>,
    w: EvalWeights,
    format: Format,
    out: Option<PathBuf>,
) -> Result<()> {
    let gold = read_triplets(&existing(Some(gold.to_path_buf()), "gold dataset")?)?;
    let transcripts = existing(Some(transcripts.to_path_buf()), "transcripts")?;
    let report = match &external {
        Some(b) => grade_external(&read_jsonl(&transcripts)?, &gold, b, &w)?,
        None => grade(&read_jsonl(&transcripts)?, &gold, &w)?,
    };
    let text = match format {
        Format::Table => format_table(&report),
        Format::Csv => format_csv(&report),
        Format::Doc => pretty_json(&report),
    };
    print!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write(&dir.join("report.json"), &pretty_json(&report))?;
        write(&dir.join("report.txt"), &format_table(&report))?;
        write(&dir.join("report.csv"), &format_csv(&report))?;
        write_manifest(
            &dir,
            "eval grade",
            json!({ "records": report.total, "score": report.score, "outputs": ["report.json", "report.txt", "report.csv"] }),
        )?;
    }
    Ok(())
}
