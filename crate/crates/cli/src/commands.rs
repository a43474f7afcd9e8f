use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::Parser;
use rayon::prelude::*;
use serde_json::json;

use ctmap_core::cellnet::{read_towers, CellularNetwork};
use ctmap_core::corpus::{read_gps, read_paths, read_trajectories, write_paths, write_trajectories};
use ctmap_core::entropy::{search_entropy, EntropyOptions, EntropyReport, PairSample};
use ctmap_core::eval::{
    evaluate_corpus, filter_corpus, snap_gps, write_comparison_csv, EvalReport, DEFAULT_MIN_TRIP_KM,
    DEFAULT_NEIGHBOR_QUANTILE, DEFAULT_SNAP_GATE_KM,
};
use ctmap_core::geo::BoundingBox;
use ctmap_core::graph::{Layer, LayerSummary, MultilayerGraph};
use ctmap_core::mapper::{map_trajectory, Algorithm, CellularTrajectory, MapperParams, NodePath};
use ctmap_core::synth::{generate_corpus, generate_world, world_bbox, SynthConfig};

use crate::manifest::{manifest_name, strip_out_dir, Failure, RunManifest};
use crate::{
    usage, AlgorithmChoice, BuildGraphArgs, Cli, Command, EntropyArgs, EvaluateArgs, GraphInput, LayerChoice, MapArgs,
    ReplayArgs, SimulateArgs,
};

struct Context_ {
    out_dir: PathBuf,
    seed: Option<u64>,
    mapper: MapperParams,
    synth: SynthConfig,
    config: Option<PathBuf>,
}

pub fn run(cli: Cli, argv: &[String]) -> Result<ExitCode> {
    if let Some(jobs) = cli.jobs {
        // a second call (replay) keeps the pool from the first
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs as usize).build_global();
    }
    let (mapper, synth) = load_config(cli.config.as_deref())?;
    let ctx = Context_ {
        out_dir: cli.out_dir.clone(),
        seed: cli.seed,
        mapper,
        synth,
        config: cli.config.clone(),
    };
    if !matches!(cli.command, Command::Replay(_)) {
        fs::create_dir_all(&ctx.out_dir).with_context(|| format!("cannot create {}", ctx.out_dir.display()))?;
    }
    let recorded = strip_out_dir(argv);
    match cli.command {
        Command::BuildGraph(args) => build_graph(&ctx, args, recorded),
        Command::Entropy(args) => entropy(&ctx, args, recorded),
        Command::Map(args) => map(&ctx, args, recorded),
        Command::Evaluate(args) => evaluate(&ctx, args, recorded),
        Command::Simulate(args) => simulate(&ctx, args, recorded),
        Command::Replay(args) => replay(&ctx, args),
    }
}

fn load_config(path: Option<&Path>) -> Result<(MapperParams, SynthConfig)> {
    let mut mapper = MapperParams::default();
    let mut synth = SynthConfig::default();
    let Some(path) = path else {
        return Ok((mapper, synth));
    };
    require_file(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = || format!("{}:{}", path.display(), i + 1);
        let Some((key, value)) = line.split_once('=') else {
            return usage(format!("{}: expected key=value", at()));
        };
        let (key, value) = (key.trim(), value.trim());
        let owned_m = mapper.set(key, value).map_err(|e| anyhow!(crate::UsageError(format!("{}: {e}", at()))))?;
        let owned_s = synth.set(key, value).map_err(|e| anyhow!(crate::UsageError(format!("{}: {e}", at()))))?;
        if !owned_m && !owned_s {
            let mut known: Vec<&str> = MapperParams::KEYS.iter().chain(SynthConfig::KEYS.iter()).copied().collect();
            known.sort_unstable();
            known.dedup();
            return usage(format!("{}: unknown parameter '{key}' (known: {})", at(), known.join(", ")));
        }
    }
    Ok((mapper, synth))
}

fn require_file(path: &Path) -> Result<()> {
    if !path.exists() {
        return usage(format!("input not found: {}", path.display()));
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    require_file(path)?;
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn create(out_dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = out_dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("cannot write {}", path.display()))?))
}

fn start_manifest(ctx: &Context_, subcommand: &str, argv: Vec<String>, params: serde_json::Value) -> Result<RunManifest> {
    let mut m = RunManifest::new(subcommand, argv, params);
    if let Some(cfg) = &ctx.config {
        m.add_input(cfg)?;
    }
    Ok(m)
}

fn load_graph(ctx: &Context_, input: &GraphInput, manifest: &mut RunManifest) -> Result<MultilayerGraph> {
    let nodes = open(&input.nodes)?;
    let edges = open(&input.edges)?;
    let graph = MultilayerGraph::load_with_metric(nodes, edges, ctx.mapper.distance)
        .with_context(|| format!("loading {} and {}", input.nodes.display(), input.edges.display()))?;
    manifest.add_input(&input.nodes)?;
    manifest.add_input(&input.edges)?;
    Ok(graph)
}

fn load_network(
    graph: &MultilayerGraph,
    towers: &Path,
    bbox: Option<&str>,
    mapper: &MapperParams,
    manifest: &mut RunManifest,
) -> Result<CellularNetwork> {
    let sites = read_towers(open(towers)?).with_context(|| format!("loading {}", towers.display()))?;
    manifest.add_input(towers)?;
    let bbox = match bbox {
        Some(text) => text.parse::<BoundingBox>().map_err(|e| anyhow!(crate::UsageError(format!("--bbox: {e}"))))?,
        None => world_bbox(graph, &sites).ok_or_else(|| anyhow!("no nodes or towers to bound"))?,
    };
    let network = CellularNetwork::build_with_metric(sites, bbox, mapper.distance)
        .with_context(|| format!("building cells from {}", towers.display()))?;
    network.warn_coincident_nodes(graph);
    Ok(network)
}

fn write_summary(out_dir: &Path, name: &str, rows: &[LayerSummary]) -> Result<()> {
    let mut out = create(out_dir, name)?;
    writeln!(out, "layer,nodes,edges,mean_degree,mean_length_km")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.name, r.nodes, r.edges, r.mean_degree, r.mean_length_km)?;
    }
    out.flush()?;
    Ok(())
}

fn print_summary(rows: &[LayerSummary]) {
    println!("{:<12} {:>8} {:>8} {:>8} {:>8}", "", "Node", "Edge", "Degree", "Length");
    for r in rows {
        println!(
            "{:<12} {:>8} {:>8} {:>8.3} {:>8.3}",
            r.name, r.nodes, r.edges, r.mean_degree, r.mean_length_km
        );
    }
}

fn save_graph(out_dir: &Path, graph: &MultilayerGraph) -> Result<()> {
    let mut nodes = create(out_dir, "nodes.csv")?;
    let mut edges = create(out_dir, "edges.csv")?;
    graph.save(&mut nodes, &mut edges)?;
    nodes.flush()?;
    edges.flush()?;
    Ok(())
}

fn finish(ctx: &Context_, mut manifest: RunManifest, outputs: &[&str]) -> Result<()> {
    for name in outputs {
        manifest.add_output(&ctx.out_dir, name)?;
    }
    manifest.write(&ctx.out_dir)?;
    Ok(())
}

fn build_graph(ctx: &Context_, args: BuildGraphArgs, argv: Vec<String>) -> Result<ExitCode> {
    if let Some(r) = args.connect_radius {
        if !(r > 0.0) {
            return usage("--connect-radius must be positive");
        }
    }
    let mut manifest = start_manifest(
        ctx,
        "build-graph",
        argv,
        json!({ "connect_radius_km": args.connect_radius, "distance": ctx.mapper.distance }),
    )?;
    let mut graph = load_graph(ctx, &args.graph, &mut manifest)?;
    if let Some(radius) = args.connect_radius {
        let (linked, report) = graph.connect_layers(radius);
        log::info!("added {} cross-layer edges", report.added);
        for s in &report.unconnected_stations {
            log::warn!("station {s} has no node of another layer within {radius} km");
        }
        graph = linked;
    }
    if !graph.is_connected() {
        log::warn!("graph has {} connected components", graph.component_count());
    }
    save_graph(&ctx.out_dir, &graph)?;
    let rows = graph.summary();
    write_summary(&ctx.out_dir, "graph_summary.csv", &rows)?;
    print_summary(&rows);
    finish(ctx, manifest, &["nodes.csv", "edges.csv", "graph_summary.csv"])?;
    Ok(ExitCode::SUCCESS)
}

fn entropy(ctx: &Context_, args: EntropyArgs, argv: Vec<String>) -> Result<ExitCode> {
    let opts = EntropyOptions {
        pair_budget: usize::try_from(args.budget).unwrap_or(usize::MAX),
        seed: ctx.seed.unwrap_or(0),
        swap_factor: (args.swap_factor > 0).then_some(args.swap_factor),
    };
    let layer_name = format!("{:?}", args.layer).to_lowercase();
    let mut manifest = start_manifest(ctx, "entropy", argv, json!({ "layer": layer_name, "options": opts }))?;
    let graph = load_graph(ctx, &args.graph, &mut manifest)?;
    let selected = match args.layer {
        LayerChoice::All => graph.clone(),
        LayerChoice::Road => graph.layer_view(Layer::Road),
        LayerChoice::Metro => graph.layer_view(Layer::Metro),
        LayerChoice::Train => graph.layer_view(Layer::Train),
    };
    if selected.node_count() < 2 {
        return Err(anyhow!("the {layer_name} layer has fewer than 2 nodes"));
    }
    let (report, samples) = search_entropy(&selected, &opts);
    let mut layers = serde_json::Map::new();
    for layer in Layer::ALL {
        let view = graph.layer_view(layer);
        if view.node_count() >= 2 {
            let (r, _) = search_entropy(&view, &opts);
            layers.insert(layer.to_string(), serde_json::to_value(&r)?);
        }
    }
    let doc = json!({ "layer": layer_name, "report": report, "layers": layers });
    let mut out = create(&ctx.out_dir, "entropy.json")?;
    writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
    out.flush()?;
    write_pairs(&ctx.out_dir, &samples)?;
    print_entropy(&layer_name, &report);
    finish(ctx, manifest, &["entropy.json", "entropy_pairs.csv"])?;
    Ok(ExitCode::SUCCESS)
}

fn write_pairs(out_dir: &Path, samples: &[PairSample]) -> Result<()> {
    let mut out = create(out_dir, "entropy_pairs.csv")?;
    writeln!(out, "source,target,hops,shortest_paths,bits")?;
    for p in samples {
        writeln!(out, "{},{},{},{},{}", p.source, p.target, p.hops, p.shortest_paths, p.bits)?;
    }
    out.flush()?;
    Ok(())
}

fn print_entropy(name: &str, r: &EntropyReport) {
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "{name}: S_avg {:.4} bits, sigma {:.4}, S_R {}, delta {}, N {}, pairs {} ({})",
        r.s_avg,
        r.sigma,
        opt(r.s_r),
        opt(r.delta),
        r.n,
        r.pairs_evaluated,
        if r.exact { "exact" } else { "sampled" }
    );
}

fn algorithm(choice: AlgorithmChoice) -> Algorithm {
    match choice {
        AlgorithmChoice::Ctmapper => Algorithm::CtMapper,
        AlgorithmChoice::Baseline1 => Algorithm::Baseline1,
        AlgorithmChoice::Baseline2 => Algorithm::Baseline2,
    }
}

fn trajectory_files(path: &Path) -> Result<Vec<PathBuf>> {
    require_file(path)?;
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return usage(format!("no .csv trajectory files in {}", path.display()));
    }
    Ok(files)
}

fn map(ctx: &Context_, args: MapArgs, argv: Vec<String>) -> Result<ExitCode> {
    let alg = algorithm(args.algorithm);
    let mut manifest = start_manifest(ctx, "map", argv, json!({ "algorithm": alg, "mapper": ctx.mapper }))?;
    let graph = load_graph(ctx, &args.graph, &mut manifest)?;
    let network = load_network(&graph, &args.towers, args.bbox.as_deref(), &ctx.mapper, &mut manifest)?;
    let mut trajectories: Vec<CellularTrajectory> = Vec::new();
    for file in trajectory_files(&args.trajectories)? {
        let batch = read_trajectories(open(&file)?).with_context(|| format!("loading {}", file.display()))?;
        manifest.add_input(&file)?;
        trajectories.extend(batch);
    }
    let mut seen = BTreeSet::new();
    if let Some(t) = trajectories.iter().find(|t| !seen.insert(t.id.as_str())) {
        return Err(anyhow!("trajectory id '{}' appears more than once", t.id));
    }
    let results: Vec<_> = trajectories
        .par_iter()
        .map(|t| map_trajectory(&graph, &network, t, &ctx.mapper, alg))
        .collect();
    let mut paths: Vec<NodePath> = Vec::new();
    let mut entries = Vec::new();
    for (t, r) in trajectories.iter().zip(results) {
        match r {
            Ok(m) => {
                entries.push(json!({
                    "trajectory_id": t.id,
                    "failed": false,
                    "log_score": m.skeleton.log_score,
                    "skeleton": m.skeleton.nodes.iter().map(|&v| graph.node(v).id.as_str()).collect::<Vec<_>>(),
                }));
                paths.push(m.complete);
            }
            Err(e) => {
                log::warn!("trajectory {}: {e}", t.id);
                entries.push(json!({ "trajectory_id": t.id, "failed": true, "error": e.to_string() }));
                manifest.failures.push(Failure {
                    id: t.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    let mut out = create(&ctx.out_dir, "paths.csv")?;
    write_paths(&mut out, &graph, &paths)?;
    out.flush()?;
    let sidecar = json!({ "algorithm": alg, "params": ctx.mapper, "trajectories": entries });
    let mut out = create(&ctx.out_dir, "paths.json")?;
    writeln!(out, "{}", serde_json::to_string_pretty(&sidecar)?)?;
    out.flush()?;
    println!(
        "{alg}: mapped {} of {} trajectories ({} failed)",
        paths.len(),
        trajectories.len(),
        manifest.failures.len()
    );
    let all_failed = paths.is_empty() && !trajectories.is_empty();
    finish(ctx, manifest, &["paths.csv", "paths.json"])?;
    Ok(if all_failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

pub fn parse_epsilons(text: &str) -> Result<Vec<f64>> {
    let eps: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow!(crate::UsageError(format!("--epsilons: {e}"))))?;
    if eps.is_empty() || eps.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return usage("--epsilons needs non-negative distances in km");
    }
    Ok(eps)
}

fn evaluate(ctx: &Context_, args: EvaluateArgs, argv: Vec<String>) -> Result<ExitCode> {
    let epsilons = parse_epsilons(&args.epsilons)?;
    let labels: Vec<&str> = args.labels.split(',').map(str::trim).collect();
    if labels.len() != 2 || labels.iter().any(|l| l.is_empty()) {
        return usage("--labels needs two comma-separated names");
    }
    let mut manifest = start_manifest(
        ctx,
        "evaluate",
        argv,
        json!({
            "epsilons_km": epsilons,
            "filter": args.filter,
            "min_trip_km": DEFAULT_MIN_TRIP_KM,
            "neighbor_quantile": DEFAULT_NEIGHBOR_QUANTILE,
            "snap_gate_km": DEFAULT_SNAP_GATE_KM,
        }),
    )?;
    let graph = load_graph(ctx, &args.graph, &mut manifest)?;
    let preds = read_paths(open(&args.paths)?, &graph).with_context(|| format!("loading {}", args.paths.display()))?;
    manifest.add_input(&args.paths)?;
    let mut gps_dropped = serde_json::Map::new();
    let mut truths = if let Some(truth) = &args.truth {
        let t = read_paths(open(truth)?, &graph).with_context(|| format!("loading {}", truth.display()))?;
        manifest.add_input(truth)?;
        t
    } else {
        let gps = args.gps.as_ref().expect("clap requires --truth or --gps");
        let tracks = read_gps(open(gps)?).with_context(|| format!("loading {}", gps.display()))?;
        manifest.add_input(gps)?;
        tracks
            .iter()
            .map(|t| {
                let points: Vec<_> = t.points.iter().map(|p| p.1).collect();
                let (path, dropped) = snap_gps(&graph, &t.trajectory_id, &points, DEFAULT_SNAP_GATE_KM);
                gps_dropped.insert(t.trajectory_id.clone(), json!(dropped));
                path
            })
            .collect()
    };
    let mut filter_report = serde_json::Value::Null;
    let mut compare_preds = match &args.compare {
        Some(p) => {
            let c = read_paths(open(p)?, &graph).with_context(|| format!("loading {}", p.display()))?;
            manifest.add_input(p)?;
            Some(c)
        }
        None => None,
    };
    let mut preds = preds;
    if args.filter {
        let towers = args.towers.as_ref().expect("clap requires --towers with --filter");
        let network = load_network(&graph, towers, args.bbox.as_deref(), &ctx.mapper, &mut manifest)?;
        let (_, kept, report) =
            filter_corpus(&graph, Vec::new(), truths, &network, DEFAULT_MIN_TRIP_KM, DEFAULT_NEIGHBOR_QUANTILE)?;
        let keep: BTreeSet<String> = kept.iter().map(|t| t.trajectory_id.clone()).collect();
        preds.retain(|p| keep.contains(&p.trajectory_id));
        if let Some(c) = compare_preds.as_mut() {
            c.retain(|p| keep.contains(&p.trajectory_id));
        }
        truths = kept;
        filter_report = serde_json::to_value(&report)?;
    }
    let report = evaluate_corpus(&graph, &preds, &truths, &epsilons);
    let mut out = create(&ctx.out_dir, "eval.csv")?;
    report.write_csv(&mut out)?;
    out.flush()?;
    let mut outputs = vec!["eval.csv", "eval_summary.json"];
    let mut summary = summary_json(&report);
    summary["filter"] = filter_report;
    if !gps_dropped.is_empty() {
        summary["gps_points_dropped"] = serde_json::Value::Object(gps_dropped);
    }
    if let Some(other) = &compare_preds {
        let other_report = evaluate_corpus(&graph, other, &truths, &epsilons);
        let mut out = create(&ctx.out_dir, "comparison.csv")?;
        write_comparison_csv(&mut out, labels[0], &report, labels[1], &other_report)?;
        out.flush()?;
        summary["compare"] = summary_json(&other_report);
        outputs.push("comparison.csv");
    }
    let mut out = create(&ctx.out_dir, "eval_summary.json")?;
    writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
    out.flush()?;
    for issue in &report.errors {
        manifest.failures.push(Failure {
            id: issue.trajectory_id.clone(),
            error: issue.error.clone(),
        });
    }
    println!("evaluated {} trajectories ({} with errors)", report.evaluated, report.failed);
    for m in &report.means {
        println!(
            "eps {:.2} km: precision {:.3} recall {:.3} skeleton {:.3} complete {:.3}",
            m.epsilon_km, m.precision, m.recall, m.skeleton_similarity, m.complete_similarity
        );
    }
    println!("rmse {:.3} km, edit distance {:.3} km", report.mean_rmse_km, report.mean_edit_distance_km);
    finish(ctx, manifest, &outputs)?;
    Ok(ExitCode::SUCCESS)
}

fn summary_json(report: &EvalReport) -> serde_json::Value {
    json!({
        "epsilons_km": report.epsilon_grid,
        "means": report.means,
        "mean_rmse_km": report.mean_rmse_km,
        "mean_edit_distance_km": report.mean_edit_distance_km,
        "evaluated": report.evaluated,
        "failed": report.failed,
        "errors": report.errors,
    })
}

fn simulate(ctx: &Context_, args: SimulateArgs, argv: Vec<String>) -> Result<ExitCode> {
    let mut config = ctx.synth.clone();
    if let Some(seed) = ctx.seed {
        config.seed = seed;
    }
    let trips = usize::try_from(args.trips).map_err(|_| anyhow!(crate::UsageError("--trips is too large".into())))?;
    let mut manifest = start_manifest(ctx, "simulate", argv, json!({ "synth": config, "trips": trips }))?;
    let world = generate_world(&config)?;
    let corpus = generate_corpus(&world, &config, trips, config.seed)?;
    let out_dir = &ctx.out_dir;
    save_graph(out_dir, &world.graph)?;
    let mut out = create(out_dir, "towers.csv")?;
    world.network.write_towers(&mut out)?;
    out.flush()?;
    let mut out = create(out_dir, "voronoi.csv")?;
    world.network.write_voronoi(&mut out)?;
    out.flush()?;
    let mut out = create(out_dir, "trajectories.csv")?;
    write_trajectories(&mut out, &corpus.trajectories)?;
    out.flush()?;
    let mut out = create(out_dir, "truth.csv")?;
    write_paths(&mut out, &world.graph, &corpus.truths)?;
    out.flush()?;
    manifest.params["world_seed"] = json!(world.world_seed);
    let rows = world.graph.summary();
    print_summary(&rows);
    let mean_obs = corpus.trajectories.iter().map(|t| t.len()).sum::<usize>() as f64 / trips as f64;
    println!(
        "{} towers, {} trips, {:.2} observations per trip",
        world.network.len(),
        trips,
        mean_obs
    );
    finish(
        ctx,
        manifest,
        &["nodes.csv", "edges.csv", "towers.csv", "voronoi.csv", "trajectories.csv", "truth.csv"],
    )?;
    Ok(ExitCode::SUCCESS)
}

fn replay(ctx: &Context_, args: ReplayArgs) -> Result<ExitCode> {
    require_file(&args.manifest)?;
    let recorded = RunManifest::read(&args.manifest)?;
    if recorded.subcommand == "replay" {
        return usage("cannot replay a replay");
    }
    let mut argv = recorded.argv.clone();
    argv.push("--out-dir".into());
    argv.push(ctx.out_dir.display().to_string());
    let cli = Cli::try_parse_from(std::iter::once("ctmap".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| anyhow!(crate::UsageError(format!("recorded command no longer parses: {e}"))))?;
    let code = run(cli, &argv)?;
    if code != ExitCode::SUCCESS {
        return Ok(code);
    }
    let fresh = RunManifest::read(&ctx.out_dir.join(manifest_name(&recorded.subcommand)))?;
    let mut same = true;
    for (a, b) in recorded.inputs.iter().zip(&fresh.inputs) {
        if a != b {
            eprintln!("input changed: {} ({} -> {})", a.path, a.sha256, b.sha256);
            same = false;
        }
    }
    for out in &recorded.outputs {
        match fresh.outputs.iter().find(|o| o.path == out.path) {
            Some(f) if f.sha256 == out.sha256 => {}
            Some(f) => {
                eprintln!("output differs: {} ({} -> {})", out.path, out.sha256, f.sha256);
                same = false;
            }
            None => {
                eprintln!("output missing: {}", out.path);
                same = false;
            }
        }
    }
    if same && fresh == recorded {
        println!("replay identical: {} outputs", recorded.outputs.len());
        Ok(ExitCode::SUCCESS)
    } else {
        if same {
            eprintln!("manifest differs from the recorded one");
        }
        Ok(ExitCode::from(1))
    }
}
