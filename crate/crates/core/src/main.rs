use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use semhier::align::{make_target, run_alignment, AlignmentSpec, TargetTask};
use semhier::hierarchy::{build_hierarchy_with, name_internal_nodes, ConceptTree, ParentEmbedding};
use semhier::inference::{calibrate_thresholds, evaluate, OntologyContext, ThresholdTable};
use semhier::io;
use semhier::ontology::{build_dag, cluster_consistency, hierarchical_consistency, OntologyGraph};
use semhier::synth::{self, SynthConfig};
use semhier::ted::{nuted, random_uted_baseline, uted, EditCostModel};
use semhier::vectors::{compute_centroids, fuse_modalities};

/// Bad flags, config or parameter values. Exits with 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "semhier", version, about = "Extract, verify and align embedding-induced concept hierarchies")]
struct Cli {
    /// JSON config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker cap. All commands currently run on one thread.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the concept tree of a snapshot and name its internal nodes.
    Extract(ExtractArgs),
    /// Tree-traversal classification and faithfulness metrics.
    Infer(InferArgs),
    /// Consistency of a tree with a reference ontology.
    Verify(VerifyArgs),
    /// Normalized unordered tree edit distance between two trees.
    Compare(CompareArgs),
    /// Mean nUTED between random binary trees.
    Baseline(BaselineArgs),
    /// Align a snapshot to a target hierarchy.
    Align(AlignArgs),
    /// Generate a planted-hierarchy dataset.
    Synth(SynthArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Extract(_) => "extract",
            Command::Infer(_) => "infer",
            Command::Verify(_) => "verify",
            Command::Compare(_) => "compare",
            Command::Baseline(_) => "baseline",
            Command::Align(_) => "align",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(default, deny_unknown_fields)]
struct ExtractArgs {
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Second-modality snapshot; leaf centroids of both are fused.
    #[arg(long)]
    modality_fuse: Option<PathBuf>,
    /// Concept bank snapshot used to name internal nodes.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Bank sidecar TSV; defaults to the bank path with a `.tsv` extension when present.
    #[arg(long)]
    bank_names: Option<PathBuf>,
    /// `direct` (default) or `leaf-mean`.
    #[arg(long)]
    parent_embedding: Option<String>,
    /// Also write tree.dot.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dot: Option<bool>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(default, deny_unknown_fields)]
struct InferArgs {
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Calibration split; also supplies the zero-shot centroids.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Threshold quantile; 0 disables early stopping.
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    grounding: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(default, deny_unknown_fields)]
struct VerifyArgs {
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    grounding: Option<PathBuf>,
    /// Bank sidecar linking internal names to ontology nodes.
    #[arg(long)]
    bank_names: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(default, deny_unknown_fields)]
struct CompareArgs {
    tree_a: Option<PathBuf>,
    tree_b: Option<PathBuf>,
    #[arg(long)]
    delete_cost: Option<f64>,
    #[arg(long)]
    insert_cost: Option<f64>,
    #[arg(long)]
    rename_cost: Option<f64>,
    /// Charge renames of internal nodes too.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    rename_internal: Option<bool>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(default, deny_unknown_fields)]
struct BaselineArgs {
    #[arg(long)]
    leaves: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(default, deny_unknown_fields)]
struct AlignArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// `swap`, `modality` or `commitment`.
    #[arg(long)]
    task: Option<String>,
    /// Leaves to exchange for the swap task, as `a,b`.
    #[arg(long)]
    swap: Option<String>,
    /// Other-modality snapshot for the modality task.
    #[arg(long)]
    modality: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    grounding: Option<PathBuf>,
    /// Text snapshot whose class centroids serve as zero-shot probes.
    #[arg(long)]
    text_probe: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_neighbors: Option<usize>,
    #[arg(long)]
    layout_epochs: Option<usize>,
    #[arg(long)]
    regressor_epochs: Option<usize>,
    /// Remaining alignment settings; config file only.
    #[arg(skip)]
    spec: Option<AlignmentSpec>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(default, deny_unknown_fields)]
struct SynthArgs {
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Training samples per class.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    test_samples: Option<usize>,
    /// Within-class noise norm.
    #[arg(long)]
    noise: Option<f64>,
    /// Split offset over within-class noise.
    #[arg(long)]
    branch_ratio: Option<f64>,
    #[arg(long)]
    distractors: Option<usize>,
}

/// Settings shared by every command.
#[derive(Serialize, Deserialize, Clone)]
#[serde(default)]
struct Common {
    seed: u64,
    threads: usize,
    out: PathBuf,
}

impl Default for Common {
    fn default() -> Self {
        Common {
            seed: 0,
            threads: 1,
            out: PathBuf::from("out"),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Value> {
    let Some(p) = path else {
        return Ok(json!({}));
    };
    let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", p.display())))?;
    if !v.is_object() {
        return Err(usage(format!("config {} must be a JSON object", p.display())));
    }
    Ok(v)
}

/// Overlays the set fields of `flags` on `base` and decodes the result.
fn overlay<T: Serialize + DeserializeOwned>(base: Option<&Value>, flags: &T, what: &str) -> Result<T> {
    let mut merged = match base {
        None => serde_json::Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(usage(format!("config section {what:?} must be an object"))),
    };
    if let Value::Object(f) = serde_json::to_value(flags)? {
        for (k, v) in f {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("config section {what:?}: {e}")))
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| usage(format!("missing --{flag}")))
}

fn write_run_record(common: &Common, command: &str, params: &impl Serialize) -> Result<()> {
    let record = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": common.seed,
        "threads": common.threads,
        "params": params,
    });
    io::write_json(&record, &common.out.join("run.json"))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<semhier::Error>() {
            if matches!(
                err,
                semhier::Error::Parameter(_) | semhier::Error::BankTooSmall { .. } | semhier::Error::SiblingSwap(..)
            ) {
                return 2;
            }
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    let mut common: Common = {
        let top: serde_json::Map<String, Value> = config
            .as_object()
            .into_iter()
            .flatten()
            .filter(|(k, _)| matches!(k.as_str(), "seed" | "threads" | "out"))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        serde_json::from_value(Value::Object(top)).map_err(|e| usage(format!("config: {e}")))?
    };
    if let Some(s) = cli.seed {
        common.seed = s;
    }
    if let Some(t) = cli.threads {
        common.threads = t;
    }
    if let Some(o) = cli.out {
        common.out = o;
    }
    if common.threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    let name = cli.command.name();
    let section = config.get(name);
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    match &cli.command {
        Command::Extract(a) => cmd_extract(&common, overlay(section, a, name)?),
        Command::Infer(a) => cmd_infer(&common, overlay(section, a, name)?),
        Command::Verify(a) => cmd_verify(&common, overlay(section, a, name)?),
        Command::Compare(a) => cmd_compare(&common, overlay(section, a, name)?),
        Command::Baseline(a) => cmd_baseline(&common, overlay(section, a, name)?),
        Command::Align(a) => cmd_align(&common, overlay(section, a, name)?),
        Command::Synth(a) => cmd_synth(&common, overlay(section, a, name)?),
    }
}

fn cmd_extract(common: &Common, mut a: ExtractArgs) -> Result<()> {
    let policy = match a.parent_embedding.get_or_insert_with(|| "direct".into()).as_str() {
        "direct" => ParentEmbedding::DirectChildren,
        "leaf-mean" => ParentEmbedding::LeafMean,
        other => return Err(usage(format!("unknown parent embedding policy {other:?}"))),
    };
    let dot = *a.dot.get_or_insert(false);
    if let (Some(bank), None) = (&a.bank, &a.bank_names) {
        let guess = bank.with_extension("tsv");
        if guess.is_file() {
            a.bank_names = Some(guess);
        }
    }
    write_run_record(common, "extract", &a)?;

    let snapshot = io::read_snapshot(required(&a.snapshot, "snapshot")?)?;
    let mut centroids = compute_centroids(&snapshot)?;
    if let Some(other) = &a.modality_fuse {
        centroids = fuse_modalities(&centroids, &compute_centroids(&io::read_snapshot(other)?)?)?;
    }
    let mut tree = build_hierarchy_with(&centroids, policy)?;
    let mut cost = None;
    if let Some(bank_path) = &a.bank {
        let bank = io::read_bank(bank_path, a.bank_names.as_deref())?;
        let named = name_internal_nodes(&tree, &bank)?;
        cost = Some(named.total_cost);
        tree = named.tree;
    }
    let doc = tree.document();
    io::write_tree(doc, &common.out.join("tree.json"))?;
    if dot {
        io::write_dot(doc, &common.out.join("tree.dot"))?;
    }
    println!("leaves: {}", tree.leaf_count());
    let names: Vec<String> = tree.parent_names().into_values().collect();
    println!("internal nodes: {}", doc.internal_nodes().count());
    if !names.is_empty() {
        println!("names: {}", names.join(", "));
    }
    if let Some(c) = cost {
        println!("naming cost: {c:.6}");
    }
    Ok(())
}

fn load_ontology(path: &Path) -> Result<OntologyGraph> {
    let edges = io::read_ontology(path)?;
    for w in &edges.warnings {
        log::warn!("{w}");
    }
    Ok(build_dag(&edges.edges))
}

fn cmd_infer(common: &Common, mut a: InferArgs) -> Result<()> {
    let p = *a.quantile.get_or_insert(0.01);
    if !(0.0..=1.0).contains(&p) {
        return Err(usage(format!("--quantile must be in [0, 1], got {p}")));
    }
    if a.ontology.is_some() != a.grounding.is_some() {
        return Err(usage("--ontology and --grounding go together"));
    }
    write_run_record(common, "infer", &a)?;

    let tree = ConceptTree::from_document(io::read_tree(required(&a.tree, "tree")?)?)?;
    let test = io::read_snapshot(required(&a.test, "test")?)?;
    let train = io::read_snapshot(required(&a.train, "train")?)?;
    let thresholds = if p == 0.0 {
        ThresholdTable::disabled()
    } else {
        calibrate_thresholds(&tree, &train, p)?
    };
    let centroids = compute_centroids(&train)?;
    let onto = match (&a.ontology, &a.grounding) {
        (Some(o), Some(gr)) => Some((load_ontology(o)?, io::read_grounding(gr)?)),
        _ => None,
    };
    let ctx = onto.as_ref().map(|(graph, grounding)| OntologyContext { graph, grounding });
    let report = evaluate(&tree, &test, &centroids, &thresholds, ctx.as_ref())?;
    io::write_json(&report, &common.out.join("faithfulness.json"))?;
    println!(
        "zero-shot {:.4}  tree {:.4}  soft {:.4}  faithfulness {:.4}",
        report.zero_shot_acc, report.tree_acc, report.soft_tree_acc, report.faithfulness_ratio
    );
    println!(
        "last-correct-node distance: vanilla {:.4}  early {:.4}",
        report.last_correct_node_dist_vanilla, report.last_correct_node_dist_early
    );
    Ok(())
}

fn cmd_verify(common: &Common, mut a: VerifyArgs) -> Result<()> {
    let gamma = *a.gamma.get_or_insert(0.5);
    let k = *a.k.get_or_insert(0.225);
    write_run_record(common, "verify", &a)?;

    let tree = io::read_tree(required(&a.tree, "tree")?)?;
    let g = load_ontology(required(&a.ontology, "ontology")?)?;
    let grounding = io::read_grounding(required(&a.grounding, "grounding")?)?;
    let names: BTreeMap<String, String> = match &a.bank_names {
        Some(p) => read_name_links(p)?,
        // Without a sidecar, internal names are looked up in the ontology as is.
        None => tree
            .internal_nodes()
            .filter_map(|n| tree.name(n))
            .map(|s| (s.to_string(), s.to_string()))
            .collect(),
    };
    let hier = hierarchical_consistency(&tree, &g, &grounding, gamma)?;
    let cluster = cluster_consistency(&tree, &g, &grounding, &names, k)?;
    for w in &cluster.warnings {
        log::warn!("{w}");
    }
    let dropped: Vec<String> = g.dropped_edges().iter().map(|e| format!("{}\t{}", e.child, e.parent)).collect();
    let out = json!({
        "hierarchical_consistency": hier.score,
        "cluster_consistency": cluster.score,
        "edges": hier.edges,
        "nodes": cluster.nodes,
        "warnings": cluster.warnings,
        "dropped_edges": dropped,
    });
    io::write_json(&out, &common.out.join("consistency.json"))?;
    println!("hierarchical consistency {:.4}", hier.score);
    println!("cluster consistency {:.4}", cluster.score);
    Ok(())
}

/// `concept_id -> ontology_node` from a bank sidecar's third column.
fn read_name_links(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            let cols: Vec<&str> = l.split('\t').collect();
            let node = cols.get(2)?.trim();
            (!node.is_empty()).then(|| (cols[0].trim().to_string(), node.to_string()))
        })
        .collect())
}

fn cmd_compare(common: &Common, mut a: CompareArgs) -> Result<()> {
    let costs = EditCostModel {
        delete_cost: *a.delete_cost.get_or_insert(1.0),
        insert_cost: *a.insert_cost.get_or_insert(1.0),
        rename_cost: *a.rename_cost.get_or_insert(1.0),
        rename_leaves_only: !*a.rename_internal.get_or_insert(false),
    };
    costs.validate()?;
    write_run_record(common, "compare", &a)?;
    let t1 = io::read_tree(required(&a.tree_a, "tree-a")?)?;
    let t2 = io::read_tree(required(&a.tree_b, "tree-b")?)?;
    let d = uted(&t1, &t2, &costs);
    let n = nuted(&t1, &t2, &costs);
    io::write_json(&json!({ "uted": d, "nuted": n }), &common.out.join("compare.json"))?;
    println!("{n}");
    Ok(())
}

fn cmd_baseline(common: &Common, mut a: BaselineArgs) -> Result<()> {
    let leaves = *a.leaves.get_or_insert(10);
    let runs = *a.runs.get_or_insert(200);
    write_run_record(common, "baseline", &a)?;
    let stats = random_uted_baseline(leaves, runs, common.seed)?;
    io::write_json(&stats, &common.out.join("baseline.json"))?;
    println!("mean {:.6}  std {:.6}  ({} leaves, {} runs)", stats.mean, stats.std, stats.n_leaves, stats.runs);
    Ok(())
}

fn cmd_align(common: &Common, mut a: AlignArgs) -> Result<()> {
    let mut spec = a.spec.take().unwrap_or_default();
    spec.seed = common.seed;
    if let Some(x) = a.alpha {
        spec.alpha_orig = x;
    }
    if let Some(x) = a.beta {
        spec.beta_onto = x;
    }
    if let Some(x) = a.gamma {
        spec.gamma_midp = x;
    }
    if let Some(x) = a.n_neighbors {
        spec.n_neighbors = x;
    }
    if let Some(x) = a.layout_epochs {
        spec.layout_epochs = x;
    }
    if let Some(x) = a.regressor_epochs {
        spec.regressor.epochs = x;
    }
    spec.validate()?;
    a.spec = Some(spec.clone());
    let task_name = a.task.get_or_insert_with(|| "swap".into()).clone();
    write_run_record(common, "align", &a)?;

    let train = io::read_snapshot(required(&a.train, "train")?)?;
    let test = io::read_snapshot(required(&a.test, "test")?)?;
    let centroids = compute_centroids(&train)?;
    let extracted = build_hierarchy_with(&centroids, ParentEmbedding::default())?;
    let modality;
    let onto;
    let task = match task_name.as_str() {
        "swap" => {
            let pair = required(&a.swap, "swap")?;
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| usage(format!("--swap expects `a,b`, got {pair:?}")))?;
            TargetTask::LeafSwap(x.trim().to_string(), y.trim().to_string())
        }
        "modality" => {
            modality = io::read_snapshot(required(&a.modality, "modality")?)?;
            TargetTask::Modality(&modality)
        }
        "commitment" => {
            onto = (
                load_ontology(required(&a.ontology, "ontology")?)?,
                io::read_grounding(required(&a.grounding, "grounding")?)?,
            );
            TargetTask::Commitment(&onto.0, &onto.1)
        }
        other => return Err(usage(format!("unknown task {other:?}"))),
    };
    let target = make_target(&task, &extracted, &centroids)?;
    let probe = match &a.text_probe {
        Some(p) => Some(compute_centroids(&io::read_snapshot(p)?)?),
        None => None,
    };
    let outcome = run_alignment(&train, &test, &target, probe.as_ref(), &spec)?;

    io::write_json(&outcome.model, &common.out.join("model.json"))?;
    io::write_snapshot(&outcome.train_after, &common.out.join("train_aligned.hlem"))?;
    io::write_snapshot(&outcome.test_after, &common.out.join("test_aligned.hlem"))?;
    io::write_tree(target.topology(), &common.out.join("target.json"))?;
    io::write_json(&outcome.report, &common.out.join("metrics.json"))?;
    let r = &outcome.report;
    println!("delta_onto {:.4}  nuted_to_target {:.4}", r.delta_onto, r.nuted_to_target);
    println!("midpoint zero-shot {:.4} -> {:.4}", r.zs_midp_orig, r.zs_midp_umap);
    if let (Some(b), Some(f)) = (r.zs_text_orig, r.zs_text_umap) {
        println!("text zero-shot {b:.4} -> {f:.4}");
    }
    Ok(())
}

fn cmd_synth(common: &Common, a: SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        classes: a.classes.unwrap_or(d.classes),
        depth: a.depth.unwrap_or(d.depth),
        dim: a.dim.unwrap_or(d.dim),
        samples: a.samples.unwrap_or(d.samples),
        test_samples: a.test_samples.unwrap_or(d.test_samples),
        noise: a.noise.unwrap_or(d.noise),
        branch_ratio: a.branch_ratio.unwrap_or(d.branch_ratio),
        distractors: a.distractors.unwrap_or(d.distractors),
        seed: common.seed,
    };
    cfg.validate()?;
    write_run_record(common, "synth", &cfg)?;
    let planted = synth::generate(&cfg)?;
    synth::write_planted(&planted, &common.out)?;
    println!(
        "{} classes, {} train / {} test samples, dim {}",
        cfg.classes,
        planted.train.len(),
        planted.test.len(),
        cfg.dim
    );
    Ok(())
}
