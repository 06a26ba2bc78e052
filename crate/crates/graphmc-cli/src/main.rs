//! Batch frontend for graph-regularized Bayesian matrix completion.
//!
//! Subcommands: `complete` runs inference on a partially observed matrix,
//! `synth` generates benchmark data, `graph` builds graph Laplacians, and
//! `eval` scores predictions. Every file-producing command also writes a
//! `.manifest` with the resolved configuration and input digests, so a run
//! can be reproduced exactly.
//!
//! Exit codes: 0 on success (for `complete`: converged), 2 when `complete`
//! hits the iteration cap without converging, 1 on usage or data errors.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use graphmc::{
    error_rate, gaussian_kernel_adjacency, gen_graph_structured, gen_iid_lowrank,
    identity_laplacian, image_to_observed, knn_adjacency, laplacian, load_coord_matrix,
    load_dense_csv, load_image, load_triplets, pixels_from_unit, psnr, rmse, run_vi,
    save_coord_matrix, save_dense_csv, save_image, save_triplets, ssim, Error, EvalReport64,
    GraphLaplacian64, InferenceConfig64, NoiseLevel, ObservedMatrix64, SynthMode, SynthSpec64,
    DEFAULT_JITTER,
};

#[derive(Parser)]
#[command(
    name = "graphmc",
    version,
    about = "Bayesian low-rank matrix completion with graph side information"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Jitter for the Laplacians the synth generator samples from. Near-zero
/// jitter gives the constant graph mode enormous prior variance, which buries
/// every smooth component under the SNR-scaled noise; 1e-2 keeps all planted
/// components identifiable.
const SYNTH_JITTER: f64 = 1e-2;

#[derive(Subcommand)]
enum Cmd {
    /// Complete a partially observed matrix
    Complete(CompleteArgs),
    /// Generate synthetic benchmark data
    Synth(SynthArgs),
    /// Build a graph Laplacian from features or an index kernel
    Graph(GraphArgs),
    /// Evaluate a prediction against ground truth
    Eval(EvalArgs),
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    /// Sparse `row<TAB>col<TAB>value` triplets with an `m n` header
    Triplet,
    /// Dense CSV with an `m,n` header; non-finite cells count as missing
    Csv,
    /// Binary PGM (P5) grayscale image; pixels are scaled to [0,1]
    Pgm,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthModeArg {
    Iid,
    Graph,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphModeArg {
    Knn,
    Kernel,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Rmse,
    ErrorRate,
    Psnr,
    Ssim,
}

#[derive(Args)]
struct CompleteArgs {
    /// Input matrix file
    #[arg(long)]
    input: PathBuf,
    /// Input file format
    #[arg(long, value_enum)]
    format: Format,
    /// Row-side Laplacian in coordinate form; identity when absent.
    /// A small diagonal jitter is added to keep the matrix invertible.
    #[arg(long)]
    row_graph: Option<PathBuf>,
    /// Column-side Laplacian in coordinate form; identity when absent
    #[arg(long)]
    col_graph: Option<PathBuf>,
    /// Starting rank; pruning only ever lowers it
    #[arg(long, default_value_t = 100)]
    init_rank: usize,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Convergence threshold on the relative change of the reconstruction
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Columns below this fraction of the strongest column's energy are dropped
    #[arg(long, default_value_t = 1e-6)]
    prune_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Completed matrix output (dense CSV, or PGM for pgm input)
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration diagnostics file, one record per line
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Ground truth (dense CSV, or PGM for pgm input); enables evaluation
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Triplet file of held-out cells; removed from dense inputs before the
    /// run and used as the evaluation set
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    mode: SynthModeArg,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    /// True rank of the generated matrix
    #[arg(long)]
    rank: usize,
    /// Signal-to-noise ratio in dB; omit for noiseless data
    #[arg(long)]
    snr: Option<f64>,
    /// Fraction of cells observed, in (0, 1]
    #[arg(long)]
    ratio: f64,
    /// Kernel width for graph mode; defaults to sqrt(3)
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving data.triplets, truth.csv, mask.triplets and,
    /// in graph mode, the two Laplacian files
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long, value_enum)]
    mode: GraphModeArg,
    /// Feature matrix CSV, one row per vertex (knn mode)
    #[arg(long)]
    features: Option<PathBuf>,
    /// Neighbors per vertex (knn mode)
    #[arg(long)]
    k: Option<usize>,
    /// Vertex count (kernel mode)
    #[arg(long)]
    n: Option<usize>,
    /// Kernel width; defaults to sqrt(3) (kernel mode)
    #[arg(long)]
    theta: Option<f64>,
    /// Diagonal jitter added to the Laplacian
    #[arg(long, default_value_t = DEFAULT_JITTER)]
    jitter: f64,
    /// Laplacian output in coordinate form
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction file (.pgm is read as an image, anything else as dense CSV)
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth file, same convention as --pred
    #[arg(long)]
    truth: PathBuf,
    /// Triplet file of cells to score; all cells when absent
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, value_enum)]
    metric: MetricArg,
    /// Comma-separated rounding alphabet, required for error-rate
    #[arg(long)]
    alphabet: Option<String>,
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let usage_ok = matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if usage_ok { 0 } else { 1 };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return 1;
    }
    let outcome = match cli.cmd {
        Cmd::Complete(a) => cmd_complete(a),
        Cmd::Synth(a) => cmd_synth(a).map(|()| 0),
        Cmd::Graph(a) => cmd_graph(a).map(|()| 0),
        Cmd::Eval(a) => cmd_eval(a).map(|()| 0),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// GRAPHMC_THREADS caps the worker pool used by the parallel parts of the
/// linear algebra (currently the neighbor search in graph construction).
fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("GRAPHMC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("GRAPHMC_THREADS must be a positive integer, got `{raw}`"))?;
    if n == 0 {
        return Err("GRAPHMC_THREADS must be >= 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("failed to size the thread pool: {e}"))
}

// ---------------------------------------------------------------------------
// manifest plumbing

struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Self {
            entries: vec![("command".into(), command.into())],
        }
    }

    fn put(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    fn put_float(&mut self, key: &str, value: f64) {
        self.put(key, format!("{value:.16e}"));
    }

    /// Records the SHA-256 of a file, or a fixed placeholder when the input
    /// is absent (e.g. an identity-substituted graph).
    fn put_digest(
        &mut self,
        key: &str,
        path: Option<&Path>,
        placeholder: &str,
    ) -> graphmc::Result<()> {
        match path {
            Some(p) => {
                let hex = sha256_hex(p)?;
                self.put(key, hex);
            }
            None => self.put(key, placeholder),
        }
        Ok(())
    }

    /// Writes sorted `key=value` lines so equal configurations produce
    /// byte-identical manifests.
    fn write(&mut self, path: &Path) -> graphmc::Result<()> {
        self.entries.sort();
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }
}

fn sha256_hex(path: &Path) -> graphmc::Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest");
    out.with_file_name(name)
}

// ---------------------------------------------------------------------------
// complete

fn load_mask_cells(path: &Path) -> graphmc::Result<Vec<(usize, usize)>> {
    let cells = load_triplets::<f64>(path)?;
    Ok(cells.iter().map(|(i, j, _)| (i, j)).collect())
}

fn cmd_complete(a: CompleteArgs) -> graphmc::Result<i32> {
    let mask_cells = a.mask.as_deref().map(load_mask_cells).transpose()?;

    // The pgm path keeps the pixel-valued image around for evaluation.
    let mut input_image: Option<DMatrix<f64>> = None;
    let observed: ObservedMatrix64 = match a.format {
        Format::Triplet => load_triplets(&a.input)?,
        Format::Csv => {
            let x = load_dense_csv::<f64>(&a.input)?;
            let held_out = mask_cells.clone().unwrap_or_default();
            let entries: Vec<(usize, usize, f64)> = (0..x.nrows())
                .flat_map(|i| (0..x.ncols()).map(move |j| (i, j)))
                .filter(|c| !held_out.contains(c))
                .map(|(i, j)| (i, j, x[(i, j)]))
                .filter(|&(_, _, v)| v.is_finite())
                .collect();
            ObservedMatrix64::from_triplets(x.nrows(), x.ncols(), &entries)?
        }
        Format::Pgm => {
            let img = load_image::<f64>(&a.input)?;
            let held_out = mask_cells.clone().unwrap_or_default();
            let kept: Vec<(usize, usize)> = (0..img.nrows())
                .flat_map(|i| (0..img.ncols()).map(move |j| (i, j)))
                .filter(|c| !held_out.contains(c))
                .collect();
            let obs = image_to_observed(&img, &kept)?;
            input_image = Some(img);
            obs
        }
    };

    let lap_row = match &a.row_graph {
        Some(p) => GraphLaplacian64::from_matrix(load_coord_matrix(p)?, DEFAULT_JITTER)?,
        None => {
            eprintln!("row graph absent; using identity");
            identity_laplacian(observed.m())?
        }
    };
    let lap_col = match &a.col_graph {
        Some(p) => GraphLaplacian64::from_matrix(load_coord_matrix(p)?, DEFAULT_JITTER)?,
        None => {
            eprintln!("column graph absent; using identity");
            identity_laplacian(observed.n())?
        }
    };

    let cfg = InferenceConfig64 {
        initial_rank: a.init_rank,
        max_iters: a.max_iters,
        tol: a.tol,
        prune_rel_tol: a.prune_tol,
        seed: a.seed,
        ..Default::default()
    };
    let result = run_vi(&observed, &lap_row, &lap_col, &cfg)?;

    match a.format {
        Format::Pgm => save_image(&a.out, &pixels_from_unit(&result.x_hat))?,
        _ => save_dense_csv(&a.out, &result.x_hat)?,
    }

    if let Some(trace_path) = &a.trace {
        let mut text = String::new();
        for rec in &result.trace {
            text.push_str(&rec.to_line());
            text.push('\n');
        }
        fs::write(trace_path, text)?;
    }

    if let Some(truth_path) = &a.truth {
        let report = evaluate_completion(
            &a,
            truth_path,
            &result.x_hat,
            input_image.as_ref(),
            mask_cells.as_deref(),
        )?;
        let text = report.to_text();
        print!("{text}");
        fs::write(manifest_sibling(&a.out, ".eval"), text)?;
    }

    let mut man = Manifest::new("complete");
    man.put("format", format_name(a.format));
    man.put("init_rank", a.init_rank);
    man.put("max_iters", a.max_iters);
    man.put_float("tol", a.tol);
    man.put_float("prune_tol", a.prune_tol);
    man.put("seed", a.seed);
    let prior = InferenceConfig64::default().prior;
    man.put_float("prior_a0", prior.a0);
    man.put_float("prior_b0", prior.b0);
    man.put_float("prior_c0", prior.c0.at(0));
    man.put_float("prior_d0", prior.d0.at(0));
    man.put_digest("input_sha256", Some(&a.input), "")?;
    man.put_digest("row_graph_sha256", a.row_graph.as_deref(), "identity")?;
    man.put_digest("col_graph_sha256", a.col_graph.as_deref(), "identity")?;
    man.put_digest("truth_sha256", a.truth.as_deref(), "none")?;
    man.put_digest("mask_sha256", a.mask.as_deref(), "none")?;
    man.put("converged", result.converged);
    man.put("estimated_rank", result.estimated_rank);
    man.put("iterations", result.iterations);
    man.write(&manifest_path(&a.out))?;

    if result.converged {
        eprintln!(
            "converged in {} iterations, estimated rank {}",
            result.iterations, result.estimated_rank
        );
        Ok(0)
    } else {
        eprintln!(
            "iteration cap {} reached without convergence, estimated rank {}",
            a.max_iters, result.estimated_rank
        );
        Ok(2)
    }
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Triplet => "triplet",
        Format::Csv => "csv",
        Format::Pgm => "pgm",
    }
}

fn manifest_sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    out.with_file_name(name)
}

fn all_cells(m: usize, n: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect()
}

/// Scores the completed matrix against ground truth. Images are compared in
/// pixel units (0..255) with whole-image PSNR/SSIM; other formats get RMSE
/// over the evaluation cells.
fn evaluate_completion(
    a: &CompleteArgs,
    truth_path: &Path,
    x_hat: &DMatrix<f64>,
    input_image: Option<&DMatrix<f64>>,
    mask_cells: Option<&[(usize, usize)]>,
) -> graphmc::Result<EvalReport64> {
    let cells_or_all = |m: usize, n: usize| -> Vec<(usize, usize)> {
        mask_cells
            .map(|c| c.to_vec())
            .unwrap_or_else(|| all_cells(m, n))
    };
    match a.format {
        Format::Pgm => {
            let truth = load_image::<f64>(truth_path)?;
            let pred = pixels_from_unit(x_hat);
            let cells = cells_or_all(truth.nrows(), truth.ncols());
            let rmse_px = rmse(&pred, &truth, &cells)?;
            let psnr_db = psnr(&pred, &truth, 255.0)?;
            let ssim_val = if truth.nrows() >= 11 && truth.ncols() >= 11 {
                Some(ssim(&pred, &truth)?)
            } else {
                None
            };
            Ok(EvalReport64 {
                rmse: rmse_px,
                error_rate: None,
                psnr_db: Some(psnr_db),
                ssim: ssim_val,
                n_evaluated: cells.len(),
            })
        }
        _ => {
            let truth = load_dense_csv::<f64>(truth_path)?;
            let cells = cells_or_all(truth.nrows(), truth.ncols());
            let rmse_val = rmse(x_hat, &truth, &cells)?;
            // Unused here, but keeps the image branch honest about shape.
            let _ = input_image;
            Ok(EvalReport64 {
                rmse: rmse_val,
                error_rate: None,
                psnr_db: None,
                ssim: None,
                n_evaluated: cells.len(),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// synth

fn cmd_synth(a: SynthArgs) -> graphmc::Result<()> {
    let noise = match a.snr {
        Some(db) => NoiseLevel::SnrDb(db),
        None => NoiseLevel::Noiseless,
    };
    let theta = a.theta.unwrap_or_else(|| 3f64.sqrt());

    fs::create_dir_all(&a.out_dir)?;
    let mut man = Manifest::new("synth");
    man.put("m", a.m);
    man.put("n", a.n);
    man.put("rank", a.rank);
    man.put_float("ratio", a.ratio);
    man.put("seed", a.seed);
    match a.snr {
        Some(db) => man.put_float("snr_db", db),
        None => man.put("snr_db", "noiseless"),
    }

    let (observed, truth) = match a.mode {
        SynthModeArg::Iid => {
            man.put("mode", "iid");
            let spec = SynthSpec64 {
                m: a.m,
                n: a.n,
                true_rank: a.rank,
                noise,
                observe_ratio: a.ratio,
                seed: a.seed,
                mode: SynthMode::Iid,
            };
            gen_iid_lowrank(&spec)?
        }
        SynthModeArg::Graph => {
            man.put("mode", "graph");
            man.put_float("theta", theta);
            man.put_float("jitter", SYNTH_JITTER);
            let row = laplacian(&gaussian_kernel_adjacency(a.m, theta)?, SYNTH_JITTER)?;
            let col = laplacian(&gaussian_kernel_adjacency(a.n, theta)?, SYNTH_JITTER)?;
            save_coord_matrix(&a.out_dir.join("row_graph.coord"), row.matrix())?;
            save_coord_matrix(&a.out_dir.join("col_graph.coord"), col.matrix())?;
            let spec = SynthSpec64 {
                m: a.m,
                n: a.n,
                true_rank: a.rank,
                noise,
                observe_ratio: a.ratio,
                seed: a.seed,
                mode: SynthMode::Graph { row, col },
            };
            gen_graph_structured(&spec)?
        }
    };

    save_triplets(&a.out_dir.join("data.triplets"), &observed)?;
    save_dense_csv(&a.out_dir.join("truth.csv"), &truth)?;

    let holdout = observed.unobserved_cells();
    if holdout.is_empty() {
        eprintln!("every cell is observed; no mask file written");
    } else {
        let indicator: Vec<(usize, usize, f64)> =
            holdout.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        let mask = ObservedMatrix64::from_triplets(a.m, a.n, &indicator)?;
        save_triplets(&a.out_dir.join("mask.triplets"), &mask)?;
    }

    man.write(&a.out_dir.join("synth.manifest"))?;
    eprintln!(
        "wrote {} observed cells and {} held-out cells to {}",
        observed.nnz(),
        holdout.len(),
        a.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// graph

fn cmd_graph(a: GraphArgs) -> graphmc::Result<()> {
    let mut man = Manifest::new("graph");
    man.put_float("jitter", a.jitter);
    let adjacency = match a.mode {
        GraphModeArg::Knn => {
            let features_path = a.features.as_deref().ok_or_else(|| {
                Error::InvalidArgument("knn mode needs --features".into())
            })?;
            let k = a
                .k
                .ok_or_else(|| Error::InvalidArgument("knn mode needs --k".into()))?;
            let f = load_dense_csv::<f64>(features_path)?;
            let rows: Vec<Vec<f64>> = (0..f.nrows())
                .map(|i| f.row(i).iter().copied().collect())
                .collect();
            man.put("mode", "knn");
            man.put("k", k);
            man.put_digest("features_sha256", Some(features_path), "")?;
            knn_adjacency(&rows, k)?
        }
        GraphModeArg::Kernel => {
            let n = a
                .n
                .ok_or_else(|| Error::InvalidArgument("kernel mode needs --n".into()))?;
            let theta = a.theta.unwrap_or_else(|| 3f64.sqrt());
            man.put("mode", "kernel");
            man.put("n", n);
            man.put_float("theta", theta);
            gaussian_kernel_adjacency(n, theta)?
        }
    };
    let lap = laplacian(&adjacency, a.jitter)?;
    save_coord_matrix(&a.out, lap.matrix())?;
    man.write(&manifest_path(&a.out))?;
    eprintln!("wrote {}x{} laplacian to {}", lap.n(), lap.n(), a.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

fn load_matrix_auto(path: &Path) -> graphmc::Result<DMatrix<f64>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        load_image(path)
    } else {
        load_dense_csv(path)
    }
}

fn parse_alphabet(raw: &str) -> graphmc::Result<Vec<f64>> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad alphabet value `{tok}`")))
        })
        .collect()
}

fn cmd_eval(a: EvalArgs) -> graphmc::Result<()> {
    let pred = load_matrix_auto(&a.pred)?;
    let truth = load_matrix_auto(&a.truth)?;
    let mask_cells = a.mask.as_deref().map(load_mask_cells).transpose()?;
    let cells = mask_cells
        .clone()
        .unwrap_or_else(|| all_cells(truth.nrows(), truth.ncols()));

    match a.metric {
        MetricArg::Rmse => {
            println!("rmse={:.16e}", rmse(&pred, &truth, &cells)?);
        }
        MetricArg::ErrorRate => {
            let raw = a.alphabet.as_deref().ok_or_else(|| {
                Error::InvalidArgument("error-rate needs --alphabet".into())
            })?;
            let alphabet = parse_alphabet(raw)?;
            println!(
                "error_rate={:.16e}",
                error_rate(&pred, &truth, &cells, &alphabet)?
            );
        }
        MetricArg::Psnr => {
            if mask_cells.is_some() {
                return Err(Error::InvalidArgument(
                    "psnr scores whole images; --mask is not supported".into(),
                ));
            }
            println!("psnr_db={:.16e}", psnr(&pred, &truth, 255.0)?);
        }
        MetricArg::Ssim => {
            if mask_cells.is_some() {
                return Err(Error::InvalidArgument(
                    "ssim scores whole images; --mask is not supported".into(),
                ));
            }
            println!("ssim={:.16e}", ssim(&pred, &truth)?);
        }
    }
    Ok(())
}
