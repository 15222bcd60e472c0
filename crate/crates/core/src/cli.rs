//! Command-line surface: argument parsing, dispatch and artifact writing.
//!
//! Every artifact carries the tool name, version and the full run
//! configuration (including the seed): JSON artifacts in an envelope,
//! CSV and TOML files as leading `#` comments, SVG files in `<metadata>`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use crate::diversity::{diversity_order_q, SimplexVector};
use crate::error::{Error, Result};
use crate::io::{self, Format};
use crate::magnitude::{
    default_t_grid, log_spaced, magnitude_profile_with_tol, similarity_matrix, weighting_with_tol, DEFAULT_TOL_RES,
};
use crate::metric::{
    classify_negative_type, euclidean_distance_matrix, negative_type_witness, validate_metric,
    validate_metric_merging, MergeReport, MetricMatrix, NegativeTypeClass, DEFAULT_TOL_EIG,
    DEFAULT_TOL_TRI,
};
use crate::paths::{
    run_pipeline, synthetic_config, synthetic_dataset, NodeTable, PathPeelOptions, PipelineConfig, SYNTHETIC_SEED,
};
use crate::peeling::{
    affine_extremum, diversity_ratio_bound, iterated_peeling_with, medoid, peel_certified, Certify,
    DecompositionLayer, PeelLayer, PeelOptions, DEFAULT_TOL_KKT, DEFAULT_TOL_NEG,
};
use crate::product::{degeneracy_witness_l1, lp_product_many_capped, DEFAULT_PRODUCT_CAP};
use crate::svg;

pub const TOOL: &str = "peelkit";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "peelkit",
    version,
    about = "Magnitude, maximum diversity and iterated peeling of finite metric spaces"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Output directory.
    #[arg(long, global = true, env = "PEELKIT_OUT", default_value = ".")]
    pub out: PathBuf,
    /// Seed for synthetic data; recorded in every artifact.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Input format (default: inferred from the file extension).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Also write SVG figures.
    #[arg(long, global = true)]
    pub svg: bool,
    /// Also write CSV tables.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Relative tolerance for asymmetry and triangle violations.
    #[arg(long, global = true)]
    pub tol_tri: Option<f64>,
    /// Eigenvalue tolerance for negative type classification.
    #[arg(long, global = true)]
    pub tol_eig: Option<f64>,
    /// Peel entries within ±tol_neg count as zero.
    #[arg(long, global = true)]
    pub tol_neg: Option<f64>,
    /// Absolute KKT residual tolerance.
    #[arg(long, global = true)]
    pub tol_kkt: Option<f64>,
    /// Weighting residual tolerance per point.
    #[arg(long, global = true)]
    pub tol_res: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// JSON inputs say which they are; a square CSV with zero diagonal is
    /// a matrix, anything else is points.
    Auto,
    Matrix,
    Points,
}

#[derive(Debug, Clone, Args)]
pub struct KindArgs {
    #[arg(long, value_enum, default_value_t = InputKind::Auto)]
    pub kind: InputKind,
    /// ℓ^p norm used to turn point inputs into distances.
    #[arg(long, default_value_t = 2.0)]
    pub norm_p: f64,
    /// Collapse coincident points and report multiplicities instead of
    /// rejecting them.
    #[arg(long)]
    pub merge_duplicates: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Distance matrix or point coordinates, CSV or JSON.
    #[arg(long, short)]
    pub input: PathBuf,
    #[command(flatten)]
    pub kind: KindArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// A single scale.
    #[arg(long, conflicts_with = "t_grid")]
    pub t: Option<f64>,
    /// `lo:hi:count` (log-spaced) or a comma list of scales.
    #[arg(long)]
    pub t_grid: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct DiversityArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Probability vector as a comma list, or `uniform`.
    #[arg(long, default_value = "uniform")]
    pub p: String,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Orders as a comma list; `inf` is accepted.
    #[arg(long, default_value = "1,2,inf")]
    pub q: String,
}

#[derive(Debug, Clone, Args)]
pub struct PeelArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Peel repeatedly until every point is in some layer.
    #[arg(long)]
    pub iterate: bool,
    #[arg(long, requires = "iterate")]
    pub max_layers: Option<usize>,
    /// Assume strict negative type instead of classifying first.
    #[arg(long)]
    pub skip_certify: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ProductArgs {
    /// Two or more factor files.
    #[arg(long, short, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[command(flatten)]
    pub kind: KindArgs,
    #[arg(long)]
    pub p_exponent: f64,
}

#[derive(Debug, Clone, Args)]
pub struct PathsArgs {
    /// Nodes CSV (`id,label,lon,lat`). Without it the synthetic dataset
    /// for `--seed` is used.
    #[arg(long, requires = "features")]
    pub nodes: Option<PathBuf>,
    /// Features keyed by node id, CSV or JSON.
    #[arg(long, requires = "nodes")]
    pub features: Option<PathBuf>,
    /// Pipeline config (TOML); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Source node id.
    #[arg(long)]
    pub source: Option<String>,
    /// Target node id.
    #[arg(long)]
    pub target: Option<String>,
    /// Intermediate stops per path.
    #[arg(long)]
    pub stops: Option<usize>,
    /// Number of shortest candidate paths.
    #[arg(long)]
    pub k: Option<usize>,
    /// Exponent of the L^p path metric.
    #[arg(long)]
    pub p_exponent: Option<f64>,
    /// Assume the path metric is strict negative type.
    #[arg(long)]
    pub skip_certify: bool,
    /// Also write the ranked paths as GeoJSON.
    #[arg(long)]
    pub geojson: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check that the input is a finite metric.
    Validate(InputArgs),
    /// Classify negative type.
    Classify(InputArgs),
    /// Weighting and magnitude over a range of scales.
    MagnitudeProfile(ProfileArgs),
    /// Diversity of given orders for a probability vector.
    Diversity(DiversityArgs),
    /// Maximum-diversity peel, optionally iterated.
    Peel(PeelArgs),
    /// L^p product of factor metrics.
    Product(ProductArgs),
    /// Diverse fixed-stop paths between two nodes.
    Paths(PathsArgs),
    /// Write the synthetic path dataset (nodes, features, config).
    GenerateSynthetic,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Classify(_) => "classify",
            Command::MagnitudeProfile(_) => "magnitude-profile",
            Command::Diversity(_) => "diversity",
            Command::Peel(_) => "peel",
            Command::Product(_) => "product",
            Command::Paths(_) => "paths",
            Command::GenerateSynthetic => "generate-synthetic",
        }
    }
}

/// Diversity order; `∞` serializes as `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Order(pub f64);

impl Serialize for Order {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub tol_tri: f64,
    pub tol_eig: f64,
    pub tol_neg: f64,
    pub tol_kkt: f64,
    pub tol_res: f64,
}

impl Tolerances {
    fn from_args(g: &GlobalArgs) -> Result<Self> {
        let pick = |name: &str, v: Option<f64>, default: f64| match v {
            None => Ok(default),
            Some(v) if v > 0.0 && v.is_finite() => Ok(v),
            Some(v) => Err(Error::InvalidConfig(format!("--{name} must be positive, got {v}"))),
        };
        Ok(Self {
            tol_tri: pick("tol-tri", g.tol_tri, DEFAULT_TOL_TRI)?,
            tol_eig: pick("tol-eig", g.tol_eig, DEFAULT_TOL_EIG)?,
            tol_neg: pick("tol-neg", g.tol_neg, DEFAULT_TOL_NEG)?,
            tol_kkt: pick("tol-kkt", g.tol_kkt, DEFAULT_TOL_KKT)?,
            tol_res: pick("tol-res", g.tol_res, DEFAULT_TOL_RES)?,
        })
    }

    fn peel(&self) -> PeelOptions {
        PeelOptions {
            tol_neg: self.tol_neg,
            tol_kkt: self.tol_kkt,
        }
    }
}

/// Everything that determined a run, echoed into each artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub inputs: Vec<String>,
    pub format: Option<Format>,
    pub kind: Option<InputKind>,
    pub norm_p: Option<f64>,
    pub merge_duplicates: bool,
    pub tolerances: Tolerances,
    pub t: Option<f64>,
    pub t_grid: Option<Vec<f64>>,
    pub q: Option<Vec<Order>>,
    pub p: Option<String>,
    pub p_exponent: Option<f64>,
    pub stops: Option<usize>,
    pub k: Option<usize>,
    pub iterate: bool,
    pub max_layers: Option<usize>,
    pub skip_certify: bool,
    pub seed: u64,
    pub out: String,
    pub outputs: Vec<&'static str>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    result: T,
}

struct Ctx {
    config: RunConfig,
    out: PathBuf,
    written: Vec<PathBuf>,
}

impl Ctx {
    fn meta(&self) -> String {
        json!({ "tool": TOOL, "version": VERSION, "config": self.config }).to_string()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&mut self, name: &str, body: &[u8]) -> Result<()> {
        let path = self.path(name);
        io::write_atomic(&path, body)?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, result: T) -> Result<()> {
        let env = Envelope {
            tool: TOOL,
            version: VERSION,
            config: &self.config,
            result,
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// CSV or TOML with the provenance as leading comments.
    fn commented(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("# {TOOL} {VERSION}\n# config: {}\n{body}", self.meta());
        self.write(name, text.as_bytes())
    }

    fn svg(&mut self, name: &str, figure: &str) -> Result<()> {
        let text = svg::with_metadata(figure, &self.meta());
        self.write(name, text.as_bytes())
    }
}

/// Runs one command and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let g = &cli.global;
    let tol = Tolerances::from_args(g)?;
    let mut outputs = vec!["json"];
    if g.csv {
        outputs.push("csv");
    }
    if g.svg {
        outputs.push("svg");
    }
    let config = RunConfig {
        command: cli.command.name(),
        inputs: Vec::new(),
        format: g.format,
        kind: None,
        norm_p: None,
        merge_duplicates: false,
        tolerances: tol,
        t: None,
        t_grid: None,
        q: None,
        p: None,
        p_exponent: None,
        stops: None,
        k: None,
        iterate: false,
        max_layers: None,
        skip_certify: false,
        seed: g.seed.unwrap_or(SYNTHETIC_SEED),
        out: g.out.display().to_string(),
        outputs,
    };
    let mut ctx = Ctx {
        config,
        out: g.out.clone(),
        written: Vec::new(),
    };
    match &cli.command {
        Command::Validate(a) => validate(&mut ctx, g, a)?,
        Command::Classify(a) => classify(&mut ctx, g, a)?,
        Command::MagnitudeProfile(a) => profile(&mut ctx, g, a)?,
        Command::Diversity(a) => diversity(&mut ctx, g, a)?,
        Command::Peel(a) => peel(&mut ctx, g, a)?,
        Command::Product(a) => product(&mut ctx, g, a)?,
        Command::Paths(a) => paths(&mut ctx, g, a)?,
        Command::GenerateSynthetic => generate_synthetic(&mut ctx)?,
    }
    Ok(ctx.written)
}

/// Machine-readable error report, printed to stderr by the binary.
pub fn error_report(e: &Error) -> Value {
    json!({
        "tool": TOOL,
        "version": VERSION,
        "error": {
            "kind": e.kind(),
            "class": e.class().as_str(),
            "exit_code": e.class().exit_code(),
            "message": e.to_string(),
        }
    })
}

struct Loaded {
    metric: MetricMatrix,
    kind: InputKind,
    /// Coordinates (after merging) for point inputs.
    points: Option<Vec<Vec<f64>>>,
    merge: Option<MergeReport>,
}

impl Loaded {
    fn label(&self, i: usize) -> Option<&str> {
        self.metric.labels().map(|l| l[i].as_str())
    }

    fn labels_of(&self, idx: &[usize]) -> Option<Vec<&str>> {
        self.metric.labels().map(|l| idx.iter().map(|&i| l[i].as_str()).collect())
    }
}

fn record_input(ctx: &mut Ctx, path: &Path, k: &KindArgs) {
    ctx.config.inputs.push(path.display().to_string());
    ctx.config.norm_p = Some(k.norm_p);
    ctx.config.merge_duplicates = k.merge_duplicates;
}

fn load(ctx: &mut Ctx, g: &GlobalArgs, path: &Path, k: &KindArgs) -> Result<Loaded> {
    record_input(ctx, path, k);
    let table = io::read_table(path, g.format)?;
    let kind = match k.kind {
        InputKind::Auto => match table.declared.as_deref() {
            Some("points") => InputKind::Points,
            Some(_) => InputKind::Matrix,
            None if looks_like_matrix(&table.rows) => InputKind::Matrix,
            None => InputKind::Points,
        },
        other => other,
    };
    ctx.config.kind = Some(kind);
    let (metric, points, merge) = match kind {
        InputKind::Points => {
            let (points, merge) = if k.merge_duplicates {
                let (p, m) = merge_points(&table.rows);
                (p, Some(m))
            } else {
                (table.rows, None)
            };
            (euclidean_distance_matrix(&points, k.norm_p)?, Some(points), merge)
        }
        _ => {
            if k.merge_duplicates {
                let (m, _, r) = validate_metric_merging(&table.rows, ctx.config.tolerances.tol_tri)?;
                (m, None, Some(r))
            } else {
                (validate_metric(&table.rows, ctx.config.tolerances.tol_tri)?.0, None, None)
            }
        }
    };
    let metric = match table.labels {
        Some(l) => {
            let l = match &merge {
                Some(r) => r.representatives.iter().map(|&i| l[i].clone()).collect(),
                None => l,
            };
            metric.with_labels(l)?
        }
        None => metric,
    };
    Ok(Loaded {
        metric,
        kind,
        points,
        merge,
    })
}

fn looks_like_matrix(rows: &[Vec<f64>]) -> bool {
    let n = rows.len();
    rows.iter().enumerate().all(|(i, r)| r.len() == n && r[i] == 0.0)
}

/// Collapses bit-identical coordinate rows onto their first occurrence.
fn merge_points(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, MergeReport) {
    let key = |r: &[f64]| -> Vec<u64> { r.iter().map(|v| (v + 0.0).to_bits()).collect() };
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut kept = Vec::new();
    let mut representatives = Vec::new();
    let mut assignment = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let g = *seen.entry(key(r)).or_insert_with(|| {
            kept.push(r.clone());
            representatives.push(i);
            kept.len() - 1
        });
        assignment.push(g);
    }
    let mut multiplicities = vec![0; kept.len()];
    for &g in &assignment {
        multiplicities[g] += 1;
    }
    (
        kept,
        MergeReport {
            representatives,
            assignment,
            multiplicities,
        },
    )
}

fn quadratic_form(d: &MetricMatrix, x: &[f64]) -> f64 {
    d.apply(x).iter().zip(x).map(|(a, b)| a * b).sum()
}

fn validate(ctx: &mut Ctx, g: &GlobalArgs, a: &InputArgs) -> Result<()> {
    let l = load(ctx, g, &a.input, &a.kind)?;
    // Point inputs are metrics by construction; report the same numbers.
    let (_, report) = validate_metric(&l.metric.to_rows(), ctx.config.tolerances.tol_tri)?;
    ctx.json(
        "validate.json",
        json!({
            "n": l.metric.len(),
            "kind": l.kind,
            "labels": l.metric.labels(),
            "report": report,
            "merge": l.merge,
        }),
    )
}

fn witness_json(d: &MetricMatrix, class: &NegativeTypeClass) -> Result<Value> {
    if class.is_strict() {
        return Ok(Value::Null);
    }
    let (value, x) = negative_type_witness(d, class.k_used)?;
    Ok(json!({ "quadratic_form": value, "x": x }))
}

fn classify(ctx: &mut Ctx, g: &GlobalArgs, a: &InputArgs) -> Result<()> {
    let l = load(ctx, g, &a.input, &a.kind)?;
    let class = classify_negative_type(&l.metric, ctx.config.tolerances.tol_eig)?;
    ctx.json(
        "classify.json",
        json!({
            "n": l.metric.len(),
            "classification": class,
            "witness": witness_json(&l.metric, &class)?,
            "merge": l.merge,
        }),
    )
}

fn parse_t_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidConfig(format!("--t-grid {s:?}: expected lo:hi:count or a comma list"));
    if let Some((lo, rest)) = s.split_once(':') {
        let (hi, count) = rest.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
            return Err(bad());
        }
        Ok(log_spaced(lo, hi, count))
    } else {
        s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
    }
}

fn profile(ctx: &mut Ctx, g: &GlobalArgs, a: &ProfileArgs) -> Result<()> {
    let l = load(ctx, g, &a.input.input, &a.input.kind)?;
    let d = &l.metric;
    let grid = match (a.t, &a.t_grid) {
        (Some(t), _) => vec![t],
        (None, Some(s)) => parse_t_grid(s)?,
        (None, None) => default_t_grid(d),
    };
    ctx.config.t = a.t;
    ctx.config.t_grid = Some(grid.clone());
    let tol_res = ctx.config.tolerances.tol_res * d.len() as f64;
    let points = magnitude_profile_with_tol(d, &grid, tol_res)?;
    ctx.json(
        "magnitude-profile.json",
        json!({ "n": d.len(), "labels": d.labels(), "points": points }),
    )?;
    if g.csv {
        let mut body = String::from("t");
        for j in 1..=d.len() {
            body.push_str(&format!(",w_{j}"));
        }
        body.push_str(",magnitude\n");
        for p in &points {
            body.push_str(&io::fmt_f64(p.t));
            match &p.weighting {
                Some(w) => {
                    for &v in &w.w {
                        body.push(',');
                        body.push_str(&io::fmt_f64(v));
                    }
                    body.push(',');
                    body.push_str(&io::fmt_f64(w.magnitude));
                }
                None => body.push_str(&",".repeat(d.len() + 1)),
            }
            body.push('\n');
        }
        ctx.commented("magnitude-profile.csv", &body)?;
    }
    if g.svg {
        let mags: Vec<Option<f64>> = points.iter().map(|p| p.magnitude()).collect();
        ctx.svg(
            "magnitude-profile.svg",
            &svg::magnitude_curve(&grid, &mags, "magnitude"),
        )?;
    }
    Ok(())
}

fn parse_orders(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("--q: not a number: {v:?}")))
        })
        .collect()
}

fn diversity(ctx: &mut Ctx, g: &GlobalArgs, a: &DiversityArgs) -> Result<()> {
    let l = load(ctx, g, &a.input.input, &a.input.kind)?;
    let d = &l.metric;
    let orders = parse_orders(&a.q)?;
    ctx.config.t = Some(a.t);
    ctx.config.q = Some(orders.iter().map(|&q| Order(q)).collect());
    ctx.config.p = Some(a.p.clone());
    let p = if a.p.trim().eq_ignore_ascii_case("uniform") {
        SimplexVector::uniform(d.len())
    } else {
        let v = parse_orders(&a.p).map_err(|_| Error::InvalidDistribution(format!("--p {:?}", a.p)))?;
        if v.len() != d.len() {
            return Err(Error::DimensionMismatch {
                expected: d.len(),
                got: v.len(),
            });
        }
        SimplexVector::new(v)?
    };
    let z = similarity_matrix(d, a.t)?;
    let values = orders
        .iter()
        .map(|&q| Ok(json!({ "q": Order(q), "diversity": diversity_order_q(&z, &p, q)? })))
        .collect::<Result<Vec<Value>>>()?;
    let magnitude = weighting_with_tol(&z, ctx.config.tolerances.tol_res * d.len() as f64)
        .ok()
        .map(|w| w.magnitude);
    ctx.json(
        "diversity.json",
        json!({
            "n": d.len(),
            "t": a.t,
            "p": p.as_slice(),
            "diversities": values,
            "magnitude": magnitude,
        }),
    )
}

fn layer_json(l: &Loaded, i: usize, layer: &DecompositionLayer) -> Value {
    let peel = &layer.peel;
    json!({
        "layer": i,
        "domain_size": layer.domain.len(),
        "indices": layer.indices,
        "labels": l.labels_of(&layer.indices),
        "weights": layer.weights,
        "entropy": peel.entropy,
        "kkt_residual": peel.kkt_residual,
        "kkt_ok": peel.kkt_ok,
        "iterations": peel.iterations,
        "support_sizes": peel.support_sizes,
        "shrink_kkt_residual": peel.shrink_kkt_residual,
        "refinement_steps": peel.refinement_steps,
        "heuristic": peel.heuristic,
        "ratio_bound": peel.ratio_bound,
    })
}

fn single_layer(n: usize, peel: PeelLayer) -> DecompositionLayer {
    let p = peel.p_star.as_slice();
    DecompositionLayer {
        domain: (0..n).collect(),
        indices: peel.support.clone(),
        weights: peel.support.iter().map(|&j| p[j]).collect(),
        peel,
    }
}

fn peel(ctx: &mut Ctx, g: &GlobalArgs, a: &PeelArgs) -> Result<()> {
    let l = load(ctx, g, &a.input.input, &a.input.kind)?;
    let d = &l.metric;
    let tol = ctx.config.tolerances;
    ctx.config.iterate = a.iterate;
    ctx.config.max_layers = a.max_layers;
    ctx.config.skip_certify = a.skip_certify;
    let certify = if a.skip_certify { Certify::Skip } else { Certify::Check };
    let (first, class) = peel_certified(d, &tol.peel(), certify, tol.tol_eig)?;
    let heuristic = first.heuristic;
    let (layers, residual_order) = if a.iterate {
        let mut dec = iterated_peeling_with(d, a.max_layers, &tol.peel())?;
        for layer in &mut dec.layers {
            if heuristic {
                layer.peel.heuristic = true;
                layer.peel.ratio_bound = diversity_ratio_bound(&d.restrict(&layer.domain), &layer.peel.p_star).ok();
            }
        }
        (dec.layers, Some(dec.residual_order))
    } else {
        (vec![single_layer(d.len(), first.clone())], None)
    };
    let aff = affine_extremum(d).ok();
    let med = medoid(d)?;
    let result = json!({
        "n": d.len(),
        "classification": class,
        "p_star": first.p_star.as_slice(),
        "layers": layers.iter().enumerate().map(|(i, x)| layer_json(&l, i, x)).collect::<Vec<_>>(),
        "residual_order": residual_order,
        "medoid": {
            "index": med.index,
            "label": l.label(med.index),
            "row_sum": med.row_sum,
            "ties": med.ties,
        },
        "bounds": {
            "quadratic_entropy": first.entropy,
            "affine_value": aff.as_ref().map(|a| a.value),
            "p_aff_nonnegative": aff.as_ref().map(|a| a.p_aff.iter().all(|&v| v >= -tol.tol_neg)),
            "ratio": diversity_ratio_bound(d, &first.p_star).ok(),
        },
        "merge": l.merge,
    });
    ctx.json("peel.json", result)?;
    if g.csv {
        let mut body = String::from("layer,index,label,weight\n");
        for (i, layer) in layers.iter().enumerate() {
            for (&j, &w) in layer.indices.iter().zip(&layer.weights) {
                let label = l.label(j).unwrap_or("");
                body.push_str(&format!("{i},{j},{label},{}\n", io::fmt_f64(w)));
            }
        }
        ctx.commented("peel.csv", &body)?;
    }
    if g.svg {
        match &l.points {
            Some(pts) if pts.first().is_some_and(|p| p.len() == 2) => {
                let xy: Vec<[f64; 2]> = pts.iter().map(|p| [p[0], p[1]]).collect();
                for (i, layer) in layers.iter().enumerate() {
                    let mut w = vec![0.0; d.len()];
                    for (&j, &v) in layer.indices.iter().zip(&layer.weights) {
                        w[j] = v;
                    }
                    let name = if a.iterate { format!("peel-layer-{i}.svg") } else { "peel.svg".into() };
                    ctx.svg(&name, &svg::peel_scatter(&xy, &w, &format!("peel layer {i}")))?;
                }
            }
            _ => eprintln!("{TOOL}: --svg needs planar point input; no figure written"),
        }
    }
    Ok(())
}

fn product(ctx: &mut Ctx, g: &GlobalArgs, a: &ProductArgs) -> Result<()> {
    if a.input.len() < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            got: a.input.len(),
        });
    }
    ctx.config.p_exponent = Some(a.p_exponent);
    let factors = a
        .input
        .iter()
        .map(|p| load(ctx, g, p, &a.kind).map(|l| l.metric))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&MetricMatrix> = factors.iter().collect();
    let prod = lp_product_many_capped(&refs, a.p_exponent, DEFAULT_PRODUCT_CAP)?;
    let class = classify_negative_type(&prod.result, ctx.config.tolerances.tol_eig)?;
    let degeneracy = if a.p_exponent == 1.0 && factors.len() == 2 {
        let x = degeneracy_witness_l1(&factors[0], &factors[1])?;
        json!({ "quadratic_form": quadratic_form(&prod.result, &x), "x": x })
    } else {
        Value::Null
    };
    ctx.commented("product.csv", &io::matrix_csv(&prod.result.to_rows(), None))?;
    ctx.json(
        "product.json",
        json!({
            "factor_sizes": prod.factor_sizes,
            "p_exponent": prod.p_exponent,
            "n": prod.result.len(),
            "classification": class,
            "degeneracy_witness": degeneracy,
            "witness": witness_json(&prod.result, &class)?,
            "matrix_file": "product.csv",
        }),
    )
}

fn paths(ctx: &mut Ctx, g: &GlobalArgs, a: &PathsArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            ctx.config.inputs.push(p.display().to_string());
            toml::from_str::<PipelineConfig>(&fs::read_to_string(p)?).map_err(|e| Error::Parse(e.to_string()))?
        }
        None => synthetic_config(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    ctx.config.seed = cfg.seed;
    let table: NodeTable = match (&a.nodes, &a.features) {
        (Some(n), Some(f)) => {
            ctx.config.inputs.push(n.display().to_string());
            ctx.config.inputs.push(f.display().to_string());
            io::read_node_table(n, f)?
        }
        _ => synthetic_dataset(cfg.seed),
    };
    if let Some(v) = &a.source {
        cfg.source = v.clone();
    }
    if let Some(v) = &a.target {
        cfg.target = v.clone();
    }
    if let Some(v) = a.stops {
        cfg.stops = v;
    }
    if let Some(v) = a.k {
        cfg.k = v;
    }
    if let Some(v) = a.p_exponent {
        cfg.p_exponent = v;
    }
    ctx.config.stops = Some(cfg.stops);
    ctx.config.k = Some(cfg.k);
    ctx.config.p_exponent = Some(cfg.p_exponent);
    ctx.config.skip_certify = a.skip_certify;
    if a.geojson {
        ctx.config.outputs.push("geojson");
    }
    let tol = ctx.config.tolerances;
    let opts = PathPeelOptions {
        certify: !a.skip_certify,
        tol_eig: tol.tol_eig,
        peel: tol.peel(),
    };
    let run = run_pipeline(&table, &cfg, &opts)?;
    let nodes = table.nodes();
    let layer = &run.peel.layer;
    let pairs: Vec<[&str; 2]> = run
        .metric
        .antipodal_pairs
        .iter()
        .map(|&(i, j)| [nodes[i].id.as_str(), nodes[j].id.as_str()])
        .collect();
    ctx.json(
        "paths.json",
        json!({
            "pipeline": cfg,
            "nodes": table.len(),
            "dag": { "nodes": run.dag.nodes.len(), "arcs": run.dag.arc_count() },
            "candidates": run.paths.len(),
            "distinct_tuples": run.metric.metric.len(),
            "antipodes_present": run.metric.antipodes_present,
            "antipodal_pairs": pairs,
            "classification": run.peel.classification,
            "rows": run.peel.rows,
            "layer": {
                "entropy": layer.entropy,
                "kkt_residual": layer.kkt_residual,
                "kkt_ok": layer.kkt_ok,
                "iterations": layer.iterations,
                "support_sizes": layer.support_sizes,
                "shrink_kkt_residual": layer.shrink_kkt_residual,
                "refinement_steps": layer.refinement_steps,
                "heuristic": layer.heuristic,
                "ratio_bound": layer.ratio_bound,
            },
        }),
    )?;
    let row_indices = |nodes: &[String]| -> Result<Vec<usize>> { nodes.iter().map(|id| table.position(id)).collect() };
    if g.csv {
        let mut body = String::from("rank,path,labels,geo_length,weight,relative_weighting,members\n");
        for (r, row) in run.peel.rows.iter().enumerate() {
            body.push_str(&format!(
                "{},{},\"{}\",{},{},{},{}\n",
                r + 1,
                row.nodes.join(">"),
                row.labels.join(" > ").replace('"', "\"\""),
                io::fmt_f64(row.geo_length),
                io::fmt_f64(row.weight),
                io::fmt_f64(row.relative_weighting),
                row.members.len()
            ));
        }
        ctx.commented("paths.csv", &body)?;
    }
    if a.geojson {
        let features = run
            .peel
            .rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let coords: Vec<[f64; 2]> = row_indices(&row.nodes)?
                    .iter()
                    .map(|&i| [nodes[i].lon, nodes[i].lat])
                    .collect();
                Ok(json!({
                    "type": "Feature",
                    "geometry": { "type": "LineString", "coordinates": coords },
                    "properties": {
                        "rank": r + 1,
                        "nodes": row.nodes,
                        "labels": row.labels,
                        "geo_length": row.geo_length,
                        "weight": row.weight,
                        "relative_weighting": row.relative_weighting,
                    },
                }))
            })
            .collect::<Result<Vec<Value>>>()?;
        let doc = json!({
            "type": "FeatureCollection",
            "features": features,
            "peelkit": { "version": VERSION, "config": ctx.config },
        });
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        ctx.write("paths.geojson", text.as_bytes())?;
    }
    if g.svg {
        let xy: Vec<[f64; 2]> = nodes.iter().map(|n| [n.lon, n.lat]).collect();
        let lines = run
            .peel
            .rows
            .iter()
            .map(|row| Ok((row_indices(&row.nodes)?, row.relative_weighting)))
            .collect::<Result<Vec<_>>>()?;
        let title = format!("{} to {}", cfg.source, cfg.target);
        ctx.svg("paths.svg", &svg::path_map(&xy, &lines, &title))?;
    }
    Ok(())
}

fn generate_synthetic(ctx: &mut Ctx) -> Result<()> {
    let cfg = PipelineConfig {
        seed: ctx.config.seed,
        ..synthetic_config()
    };
    let table = synthetic_dataset(cfg.seed);
    ctx.commented("nodes.csv", &io::nodes_csv(&table))?;
    ctx.commented("features.csv", &io::features_csv(&table))?;
    let body = toml::to_string(&cfg).map_err(|e| Error::Parse(e.to_string()))?;
    ctx.commented("config.toml", &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_grid_forms() {
        assert_eq!(parse_t_grid("0.5,1,2").unwrap(), vec![0.5, 1.0, 2.0]);
        let g = parse_t_grid("1e-3:50:50").unwrap();
        assert_eq!(g.len(), 50);
        assert_eq!((g[0], g[49]), (1e-3, 50.0));
        assert!(parse_t_grid("0:1:3").is_err());
        assert!(parse_t_grid("1:2").is_err());
    }

    #[test]
    fn orders_accept_infinity() {
        let q = parse_orders("1, 2,inf").unwrap();
        assert_eq!(q[2], f64::INFINITY);
        assert_eq!(serde_json::to_string(&Order(q[2])).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&Order(2.0)).unwrap(), "2.0");
    }

    #[test]
    fn point_merging_keeps_first_occurrence() {
        let rows = vec![vec![0.0, 1.0], vec![2.0, 2.0], vec![-0.0, 1.0], vec![2.0, 2.0]];
        let (kept, m) = merge_points(&rows);
        assert_eq!(kept.len(), 2);
        assert_eq!(m.representatives, vec![0, 1]);
        assert_eq!(m.assignment, vec![0, 1, 0, 1]);
        assert_eq!(m.multiplicities, vec![2, 2]);
    }

    #[test]
    fn auto_kind_detection() {
        assert!(looks_like_matrix(&[vec![0.0, 1.0], vec![1.0, 0.0]]));
        assert!(!looks_like_matrix(&[vec![0.0, 1.0], vec![1.0, 1.0]]));
        assert!(!looks_like_matrix(&[vec![0.0, 1.0, 2.0]]));
    }

    #[test]
    fn nonpositive_tolerances_are_rejected() {
        let cli = Cli::try_parse_from(["peelkit", "--tol-kkt", "0", "generate-synthetic"]).unwrap();
        assert!(matches!(Tolerances::from_args(&cli.global), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
