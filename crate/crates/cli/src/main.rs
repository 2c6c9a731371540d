mod config;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use goquant::format::{self, Model, NamedTensor, TensorFile};
use goquant::kernel::{
    check_accumulator, float_reference, quantize_activations_for, reference_gemm, report_counters, shiftadd_gemm,
    ActScaleSource, KernelConfig,
};
use goquant::lattice::AccumulatorWidth;
use goquant::matrix::{dot, Matrix};
use goquant::oracle::OracleLimits;
use goquant::precondition::{collect_stats, StatKind};
use goquant::quantizer::{error_report, quantize_tensor_detailed, NormScope, QuantConfig, QuantizedTensor};
use goquant::verify::{run_suite, Fault, VerifyOptions};
use goquant::{ErrorClass, SolveMode, Topology};

use config::ConfigFile;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(goquant::Error),
    /// The command ran but its checks did not hold.
    Failed(String),
}

impl From<goquant::Error> for CliError {
    fn from(e: goquant::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) => match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            },
            CliError::Failed(_) => 3,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "goquant", version, about = "Dual-basis power-of-two weight quantization")]
struct Cli {
    /// Print reports as key=value lines.
    #[arg(long, global = true)]
    porcelain: bool,

    /// key=value settings file; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Quantize every tensor of a weight file into a model file.
    Quantize(QuantizeArgs),
    /// Compare quantized layer outputs with the float layers.
    Eval(EvalArgs),
    /// Run the shift-add kernel and report operation counters.
    Bench(BenchArgs),
    /// Summarize a model file.
    Inspect(InspectArgs),
    /// Check analytical shortcuts against brute-force oracles.
    Verify(VerifyArgs),
}

macro_rules! value_enum_from_str {
    ($t:ty) => {
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                <$t as ValueEnum>::from_str(s, true)
            }
        }
    };
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TopologyArg {
    Pot,
    Linear,
}
value_enum_from_str!(TopologyArg);

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Geo,
    Ref,
}
value_enum_from_str!(ModeArg);

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScopeArg {
    Channel,
    Block,
}
value_enum_from_str!(ScopeArg);

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FaultArg {
    SignFlip,
}

#[derive(Args, Debug)]
struct QuantizeArgs {
    /// Weight tensors, each d_out x d_in.
    #[arg(long, value_name = "F.gqt")]
    weights: Option<PathBuf>,
    /// Calibration activations, one n x d_in tensor per weight name.
    #[arg(long, value_name = "F.gqt")]
    calib: Option<PathBuf>,
    #[arg(long)]
    bits: Option<u8>,
    #[arg(long, value_enum)]
    topology: Option<TopologyArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Number of bases (1 or 2).
    #[arg(long)]
    k: Option<u8>,
    /// Smoothing exponent.
    #[arg(long)]
    alpha: Option<f32>,
    /// Ridge strength for the REF solve.
    #[arg(long)]
    lambda: Option<f32>,
    /// Macro-block length N.
    #[arg(long)]
    group: Option<usize>,
    /// Micro-block length G.
    #[arg(long)]
    micro: Option<usize>,
    #[arg(long)]
    act_bits: Option<u8>,
    #[arg(long)]
    scale_bits: Option<u8>,
    /// Scope of the primary normalization scale.
    #[arg(long, value_enum)]
    norm_scope: Option<ScopeArg>,
    #[arg(long, value_name = "M.gq")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_name = "M.gq")]
    model: Option<PathBuf>,
    /// Float weights the model was quantized from.
    #[arg(long, value_name = "F.gqt")]
    weights: Option<PathBuf>,
    /// Layer inputs, one n x d_in tensor per weight name.
    #[arg(long, value_name = "X.gqt")]
    inputs: Option<PathBuf>,
    /// Comma-separated subset of mse, cosine, outgap.
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long)]
    acc_bits: Option<u32>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_name = "M.gq")]
    model: Option<PathBuf>,
    #[arg(long, value_name = "X.gqt")]
    inputs: Option<PathBuf>,
    #[arg(long)]
    acc_bits: Option<u32>,
    /// Kernel runs per tensor; the fastest is reported.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Cross-check every accumulation against integer multiplies.
    #[arg(long)]
    audit: bool,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long, value_name = "M.gq")]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Additionally search this micro-block size exhaustively.
    #[arg(long)]
    micro: Option<usize>,
    /// Allow exhaustive searches above G = 16.
    #[arg(long)]
    big: bool,
    /// Random cases per stride.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0x5EED)]
    seed: u64,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultArg>,
}

/// Report sink: aligned text for people, `key=value` lines for scripts.
struct Out {
    porcelain: bool,
}

impl Out {
    fn kv(&self, key: &str, val: impl Display) {
        if self.porcelain {
            println!("{key}={val}");
        }
    }

    fn text(&self, line: impl Display) {
        if !self.porcelain {
            println!("{line}");
        }
    }
}

fn required(v: Option<PathBuf>, cfg: &ConfigFile, key: &str) -> CliResult<PathBuf> {
    cfg.pick(v, key)?
        .ok_or_else(|| CliError::Usage(format!("--{key} is required")))
}

fn sorted_arrays(file: TensorFile) -> TensorFile {
    let mut file = file;
    file.tensors.sort_by(|a, b| a.name.cmp(&b.name));
    file
}

fn matrix_2d(file: &TensorFile, name: &str) -> CliResult<Matrix> {
    let a = file.get(name)?;
    if a.shape.len() != 2 {
        return Err(goquant::Error::Shape(format!("tensor {name:?} has rank {}, expected 2", a.shape.len())).into());
    }
    Ok(a.to_matrix()?)
}

fn quant_config(a: &QuantizeArgs, cfg: &ConfigFile) -> CliResult<QuantConfig> {
    let d = QuantConfig::default();
    let c = QuantConfig {
        bits: cfg.pick(a.bits, "bits")?.unwrap_or(d.bits),
        topology: match cfg.pick(a.topology, "topology")? {
            Some(TopologyArg::Pot) | None => Topology::Pot,
            Some(TopologyArg::Linear) => Topology::Linear,
        },
        mode: match cfg.pick(a.mode, "mode")? {
            Some(ModeArg::Geo) | None => SolveMode::Geo,
            Some(ModeArg::Ref) => SolveMode::Ref,
        },
        k: cfg.pick(a.k, "k")?.unwrap_or(d.k),
        macro_n: cfg.pick(a.group, "group")?.unwrap_or(d.macro_n),
        micro_g: cfg.pick(a.micro, "micro")?.unwrap_or(d.micro_g),
        alpha: cfg.pick(a.alpha, "alpha")?.unwrap_or(d.alpha),
        lambda: cfg.pick(a.lambda, "lambda")?.unwrap_or(d.lambda),
        scale_bits: cfg.pick(a.scale_bits, "scale-bits")?.unwrap_or(d.scale_bits),
        act_bits: cfg.pick(a.act_bits, "act-bits")?.unwrap_or(d.act_bits),
        norm_scope: match cfg.pick(a.norm_scope, "norm-scope")? {
            Some(ScopeArg::Channel) | None => NormScope::PerChannel,
            Some(ScopeArg::Block) => NormScope::PerMacroBlock,
        },
    };
    c.validate()?;
    Ok(c)
}

fn cmd_quantize(a: QuantizeArgs, cfg: &ConfigFile, out: &Out) -> CliResult {
    let qc = quant_config(&a, cfg)?;
    let calib_path = cfg.pick(a.calib.clone(), "calib")?;
    if qc.mode == SolveMode::Ref && calib_path.is_none() {
        return Err(CliError::Usage("--mode ref requires --calib".into()));
    }
    let weights_path = required(a.weights.clone(), cfg, "weights")?;
    let out_path = required(a.out.clone(), cfg, "out")?;

    let weights = sorted_arrays(format::load_tensor_file(&weights_path)?);
    let calib = calib_path.map(format::load_tensor_file).transpose()?;

    let start = Instant::now();
    let mut model = Model::default();
    out.text(format!(
        "{:<24} {:>11} {:>10} {:>10} {:>9} {:>8}",
        "tensor", "shape", "frob_rel", "cosine", "fallback", "secs"
    ));
    for arr in &weights.tensors {
        let name = &arr.name;
        let w = matrix_2d(&weights, name)?;
        let stats = match &calib {
            Some(c) => Some(collect_stats(&[matrix_2d(c, name)?], StatKind::MaxAbs)?),
            None => None,
        };
        let t = Instant::now();
        let outcome = quantize_tensor_detailed(&w, stats.as_ref(), &qc)?;
        let secs = t.elapsed().as_secs_f64();
        let rep = error_report(&w, &outcome.tensor)?;
        log::info!("{name}: {} search evaluations", outcome.search_ops.total());

        let p = format!("tensor.{name}");
        out.kv(&format!("{p}.shape"), format!("{}x{}", w.rows(), w.cols()));
        out.kv(&format!("{p}.frobenius_rel"), rep.frobenius_rel);
        out.kv(&format!("{p}.mean_cosine"), rep.mean_cosine);
        out.kv(&format!("{p}.zero_rows"), rep.zero_rows);
        out.kv(&format!("{p}.ref_fallbacks"), outcome.ref_fallbacks);
        out.kv(&format!("{p}.seconds"), secs);
        out.text(format!(
            "{:<24} {:>11} {:>10.6} {:>10.6} {:>9} {:>8.3}",
            name,
            format!("{}x{}", w.rows(), w.cols()),
            rep.frobenius_rel,
            rep.mean_cosine,
            outcome.ref_fallbacks,
            secs
        ));
        model.tensors.push(NamedTensor {
            name: name.clone(),
            tensor: outcome.tensor,
        });
    }
    format::save_model_file(&out_path, &model)?;
    let total = start.elapsed().as_secs_f64();
    let bytes = format::encoded_len(&model);
    out.kv("tensors", model.tensors.len());
    out.kv("bytes", bytes);
    out.kv("seconds", total);
    out.text(format!(
        "wrote {} ({} tensors, {bytes} bytes) in {total:.3} s",
        out_path.display(),
        model.tensors.len()
    ));
    Ok(())
}

fn load_sorted_model(path: &Path) -> CliResult<Model> {
    let mut m = format::load_model_file(path)?;
    m.tensors.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(m)
}

fn acc_width(bits: Option<u32>) -> CliResult<AccumulatorWidth> {
    Ok(match bits {
        Some(b) => AccumulatorWidth::new(b)?,
        None => AccumulatorWidth::default(),
    })
}

/// Quantized layer output for inputs `x`: the integer kernel on power-of-two
/// lattices, the dequantized float path otherwise.
fn quantized_output(x: &Matrix, qt: &QuantizedTensor, kc: &KernelConfig) -> CliResult<Matrix> {
    let qa = quantize_activations_for(x, qt, ActScaleSource::Dynamic)?;
    if qt.lattice().topology() == Topology::Pot {
        check_accumulator(qt, qt.config.act_bits, kc.acc)?;
        Ok(shiftadd_gemm(&qa, qt, kc)?.y)
    } else {
        Ok(float_reference(&qa, qt)?)
    }
}

fn check_inputs(x: &Matrix, qt: &QuantizedTensor, name: &str) -> CliResult {
    if x.cols() != qt.d_in {
        return Err(goquant::Error::Shape(format!(
            "inputs for {name:?} have {} columns, layer expects {}",
            x.cols(),
            qt.d_in
        ))
        .into());
    }
    Ok(())
}

/// Mean row cosine; a pair of all-zero rows counts as identical.
fn output_cosine(a: &Matrix, b: &Matrix) -> f64 {
    if a.rows() == 0 {
        return 1.0;
    }
    let sum: f64 = a
        .iter_rows()
        .zip(b.iter_rows())
        .map(|(x, y)| {
            let (nx, ny) = (dot(x, x).sqrt(), dot(y, y).sqrt());
            match (nx > 0.0, ny > 0.0) {
                (true, true) => dot(x, y) / (nx * ny),
                (false, false) => 1.0,
                _ => 0.0,
            }
        })
        .sum();
    sum / a.rows() as f64
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Metric {
    Mse,
    Cosine,
    Outgap,
}

fn parse_metrics(s: &str) -> CliResult<Vec<Metric>> {
    s.split(',')
        .map(|m| match m.trim() {
            "mse" => Ok(Metric::Mse),
            "cosine" => Ok(Metric::Cosine),
            "outgap" => Ok(Metric::Outgap),
            other => Err(CliError::Usage(format!("unknown metric {other:?} (mse, cosine, outgap)"))),
        })
        .collect()
}

fn cmd_eval(a: EvalArgs, cfg: &ConfigFile, out: &Out) -> CliResult {
    let metrics = parse_metrics(
        &cfg.pick(a.metrics, "metrics")?
            .unwrap_or_else(|| "mse,cosine,outgap".into()),
    )?;
    let kc = KernelConfig {
        acc: acc_width(cfg.pick(a.acc_bits, "acc-bits")?)?,
        audit: false,
    };
    let model = load_sorted_model(&required(a.model, cfg, "model")?)?;
    let weights = format::load_tensor_file(required(a.weights, cfg, "weights")?)?;
    let inputs = format::load_tensor_file(required(a.inputs, cfg, "inputs")?)?;

    out.text(format!("{:<24} {:>14} {:>10} {:>10}", "tensor", "mse", "cosine", "outgap"));
    for nt in &model.tensors {
        let (name, qt) = (&nt.name, &nt.tensor);
        let w = matrix_2d(&weights, name)?;
        if (w.rows(), w.cols()) != (qt.d_out, qt.d_in) {
            return Err(goquant::Error::Shape(format!(
                "weights for {name:?} are {}x{}, model has {}x{}",
                w.rows(),
                w.cols(),
                qt.d_out,
                qt.d_in
            ))
            .into());
        }
        let x = matrix_2d(&inputs, name)?;
        check_inputs(&x, qt, name)?;
        let y_ref = reference_gemm(&x, &w)?;
        let y_q = quantized_output(&x, qt, &kc)?;

        let diff2: f64 = y_ref
            .as_slice()
            .iter()
            .zip(y_q.as_slice())
            .map(|(r, q)| (r - q) * (r - q))
            .sum();
        let n = y_ref.as_slice().len().max(1) as f64;
        let base = y_ref.norm();
        let values = [
            (Metric::Mse, "mse", diff2 / n),
            (Metric::Cosine, "cosine", output_cosine(&y_ref, &y_q)),
            (Metric::Outgap, "outgap", if base > 0.0 { diff2.sqrt() / base } else { diff2.sqrt() }),
        ];
        let mut cells = Vec::new();
        for (m, key, v) in values {
            if metrics.contains(&m) {
                out.kv(&format!("tensor.{name}.{key}"), v);
                cells.push(format!("{v:.6e}"));
            } else {
                cells.push("-".into());
            }
        }
        out.text(format!("{:<24} {:>14} {:>10} {:>10}", name, cells[0], cells[1], cells[2]));
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs, cfg: &ConfigFile, out: &Out) -> CliResult {
    let kc = KernelConfig {
        acc: acc_width(cfg.pick(a.acc_bits, "acc-bits")?)?,
        audit: a.audit,
    };
    let model = load_sorted_model(&required(a.model, cfg, "model")?)?;
    let inputs = format::load_tensor_file(required(a.inputs, cfg, "inputs")?)?;
    for nt in &model.tensors {
        let (name, qt) = (&nt.name, &nt.tensor);
        let x = matrix_2d(&inputs, name)?;
        check_inputs(&x, qt, name)?;
        let qa = quantize_activations_for(&x, qt, ActScaleSource::Dynamic)?;
        check_accumulator(qt, qt.config.act_bits, kc.acc)?;
        let mut best = f64::INFINITY;
        let mut last = None;
        for _ in 0..a.repeat.max(1) {
            let t = Instant::now();
            let r = shiftadd_gemm(&qa, qt, &kc)?;
            best = best.min(t.elapsed().as_secs_f64());
            last = Some(r);
        }
        let rep = report_counters(last.as_ref().expect("at least one run"), qt.d_in);
        let c = rep.counters;
        let p = format!("tensor.{name}");
        let fields: [(&str, String); 12] = [
            ("outputs", rep.outputs.to_string()),
            ("shifts", c.shifts.to_string()),
            ("adds", c.adds.to_string()),
            ("int_muls", c.int_muls.to_string()),
            ("loop_muls", c.loop_muls.to_string()),
            ("float_muls", c.float_muls.to_string()),
            ("skipped_zeros", c.skipped_zeros.to_string()),
            ("int_muls_per_output", rep.int_muls_per_output.to_string()),
            ("mac_muls_per_output", rep.mac_baseline_per_output.to_string()),
            ("mul_ratio", format!("{:.6}", rep.mul_ratio)),
            ("skip_rate", format!("{:.6}", rep.skip_rate)),
            ("seconds", format!("{best:.6}")),
        ];
        out.text(format!("{name} ({}x{} x {} inputs)", qt.d_out, qt.d_in, x.rows()));
        for (k, v) in &fields {
            out.kv(&format!("{p}.{k}"), v);
            out.text(format!("  {k:<20} {v}"));
        }
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs, cfg: &ConfigFile, out: &Out) -> CliResult {
    let path = required(a.model, cfg, "model")?;
    let model = load_sorted_model(&path)?;
    let bytes = std::fs::metadata(&path).map_err(goquant::Error::from)?.len();
    out.kv("version", format::VERSION);
    out.kv("tensors", model.tensors.len());
    out.kv("bytes", bytes);
    out.text(format!(
        "{}: format v{}, {} tensors, {bytes} bytes",
        path.display(),
        format::VERSION,
        model.tensors.len()
    ));
    for nt in &model.tensors {
        let (name, qt) = (&nt.name, &nt.tensor);
        let c = &qt.config;
        let weights = (qt.d_out * qt.d_in) as f64;
        let payload = c.payload_bits_per_weight();
        let stored = format::record_len(name, qt) as f64 * 8.0 / weights.max(1.0);
        let mut hist = vec![0usize; c.micro_g / 2 + 1];
        for m in &qt.micro {
            hist[m.stride as usize] += 1;
        }
        let p = format!("tensor.{name}");
        let fields: Vec<(&str, String)> = vec![
            ("shape", format!("{}x{}", qt.d_out, qt.d_in)),
            ("lattice", c.lattice_id().to_string()),
            ("mode", c.mode.to_string()),
            ("k", c.k.to_string()),
            ("macro_n", c.macro_n.to_string()),
            ("micro_g", c.micro_g.to_string()),
            ("scale_bits", c.scale_bits.to_string()),
            ("act_bits", c.act_bits.to_string()),
            ("alpha", c.alpha.to_string()),
            ("lambda", c.lambda.to_string()),
            (
                "norm_scope",
                match c.norm_scope {
                    NormScope::PerChannel => "channel".into(),
                    NormScope::PerMacroBlock => "block".into(),
                },
            ),
            ("macro_blocks", (qt.d_out * qt.n_macro()).to_string()),
            ("micro_blocks", qt.micro.len().to_string()),
            ("payload_bits_per_weight", format!("{payload:.6}")),
            ("overhead_bits_per_weight", format!("{:.6}", payload - c.bits as f64)),
            ("stored_bits_per_weight", format!("{stored:.6}")),
        ];
        out.text(format!("\n{name}"));
        for (k, v) in &fields {
            out.kv(&format!("{p}.{k}"), v);
            out.text(format!("  {k:<26} {v}"));
        }
        if !qt.micro.is_empty() {
            out.text("  stride histogram");
            for (s, n) in hist.iter().enumerate().skip(1).filter(|(_, n)| **n > 0) {
                out.kv(&format!("{p}.stride.{s}"), n);
                out.text(format!("    {s:>2} {n}"));
            }
        }
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs, out: &Out) -> CliResult {
    let opts = VerifyOptions {
        seed: a.seed,
        trials: a.trials,
        micro_g: a.micro,
        limits: OracleLimits { allow_big: a.big },
        fault: a.inject_fault.map(|FaultArg::SignFlip| Fault::SignFlip),
    };
    let results = run_suite(&opts)?;
    let mut failed = 0;
    for r in &results {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        failed += !r.passed() as usize;
        let key = r.name.replace(|c: char| !c.is_ascii_alphanumeric(), "_");
        out.kv(&format!("check.{key}"), status);
        out.kv(&format!("check.{key}.failures"), r.failures);
        out.text(format!("{status} {:<40} {} cases, {} failures", r.name, r.cases, r.failures));
    }
    out.kv("result", if failed == 0 { "pass" } else { "fail" });
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of {} checks failed", results.len())));
    }
    Ok(())
}

fn init_threads() -> CliResult {
    if let Ok(v) = std::env::var("GOQUANT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("GOQUANT_THREADS={v:?} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    init_threads()?;
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let out = Out {
        porcelain: cli.porcelain,
    };
    match cli.command {
        Command::Quantize(a) => cmd_quantize(a, &cfg, &out),
        Command::Eval(a) => cmd_eval(a, &cfg, &out),
        Command::Bench(a) => cmd_bench(a, &cfg, &out),
        Command::Inspect(a) => cmd_inspect(a, &cfg, &out),
        Command::Verify(a) => cmd_verify(a, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("goquant: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
