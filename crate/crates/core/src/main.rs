use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jopeq::codec::{decode, encode, sub_vector_count, Baseline, Dither, EncodedUpdate};
use jopeq::config::ExperimentConfig;
use jopeq::dither::{stream, SharedRandomness, DOMAIN_PRIVATE};
use jopeq::flsim::Experiment;
use jopeq::privacy::build_ppn_sampler;
use jopeq::sweep::run_sweep;
use jopeq::verify::{run_suite, DEFAULT_SEED};
use jopeq::{Error, Result};

#[derive(Parser)]
#[command(name = "jopeq", version, about = "Joint privacy enhancement and quantization for federated learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (flat `key = value` file).
    #[arg(long, env = "JOPEQ_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, env = "JOPEQ_OUT")]
    out: Option<PathBuf>,
    /// Base seed (overrides `fl.seed`).
    #[arg(long, env = "JOPEQ_SEED")]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "JOPEQ_JOBS")]
    jobs: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = Some(j);
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the acceptance suite; exits nonzero on any failure.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated criterion ids (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
    /// SNR-versus-rate sweep and learning curves as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// One simulation at the configured operating point; per-round metrics as CSV.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Stand-alone codec on the byte layout.
    Codec {
        #[command(subcommand)]
        op: CodecOp,
    },
}

#[derive(Args)]
struct CodecArgs {
    #[command(flatten)]
    common: Common,
    /// Input file.
    #[arg(long)]
    input: PathBuf,
    /// Output file.
    #[arg(long)]
    output: PathBuf,
    /// User index keying the shared dither.
    #[arg(long, default_value_t = 0)]
    user: u64,
    /// Round index keying the shared dither.
    #[arg(long, default_value_t = 0)]
    round: u64,
}

#[derive(Subcommand)]
enum CodecOp {
    /// Text vector (whitespace separated) to payload bytes.
    Encode(CodecArgs),
    /// Payload bytes to text vector.
    Decode {
        #[command(flatten)]
        args: CodecArgs,
        /// Model dimension (defaults to M*L from the header).
        #[arg(long)]
        dim: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn install_pool(jobs: Option<usize>) {
    if let Some(j) = jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Verify { common, only } => {
            install_pool(common.jobs);
            let seed = common.seed.unwrap_or(DEFAULT_SEED);
            let mut ok = true;
            for outcome in run_suite(&only, seed) {
                print!("{outcome}");
                ok &= outcome.pass();
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Sweep { common } => {
            let cfg = common.load()?;
            let result = run_sweep(&cfg)?;
            for p in result.write(&cfg.out_dir)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { common } => {
            let cfg = common.load()?;
            install_pool(cfg.jobs);
            let exp = Experiment::new(&cfg.base_fl_config()?)?;
            let metrics = exp.run()?;
            let mut csv = String::from(
                "# jopeq-metrics v1\nround,t,loss_gap,snr_db,distortion,distortion_bound,convergence_bound,overloads,accuracy_proxy\n",
            );
            for m in &metrics {
                let _ = writeln!(
                    csv,
                    "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{},{:.9e}",
                    m.round + 1,
                    m.t,
                    m.loss_gap,
                    m.snr_db,
                    m.distortion,
                    m.distortion_bound,
                    m.convergence_bound,
                    m.overloads,
                    m.accuracy_proxy
                );
            }
            fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("metrics.csv");
            fs::write(&path, csv)?;
            if let Some(s) = &exp.transport.sampler {
                fs::write(cfg.out_dir.join("sampler.txt"), s.report().to_text())?;
            }
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Codec { op } => {
            match op {
                CodecOp::Encode(a) => codec_encode(&a)?,
                CodecOp::Decode { args, dim } => codec_decode(&args, dim)?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    fs::read_to_string(path)?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Config(format!("{}: cannot parse `{t}`", path.display()))))
        .collect()
}

fn codec_encode(a: &CodecArgs) -> Result<()> {
    let cfg = a.common.load()?;
    let fl = cfg.base_fl_config()?;
    let lat = fl.codec.lattice.build()?;
    let sampler = match fl.baseline {
        Baseline::Jopeq => Some(build_ppn_sampler(&fl.codec.mechanism.build(lat.dimension())?, &lat, &fl.codec.sampler)?),
        Baseline::SdqOnly => None,
        other => return Err(Error::Config(format!("baseline {} has no payload", other.name()))),
    };
    let h = read_vector(&a.input)?;
    let dither = Dither::Shared(SharedRandomness::new(fl.codec.shared_seed, a.user, a.round));
    let mut rng = stream(DOMAIN_PRIVATE, fl.codec.private_seed, a.user, a.round, 0);
    let enc = encode(&h, &lat, sampler.as_ref(), &dither, &mut rng)?;
    fs::write(&a.output, enc.to_bytes()?)?;
    eprintln!("{} sub-vectors, {} payload bits, {} overloads", enc.indices.len(), enc.payload_bits(), enc.overloads);
    Ok(())
}

fn codec_decode(a: &CodecArgs, dim: Option<usize>) -> Result<()> {
    let cfg = a.common.load()?;
    let lat = cfg.base_fl_config()?.codec.lattice.build()?;
    let bytes = fs::read(&a.input)?;
    if bytes.len() < 2 {
        return Err(Error::CorruptPayload("payload too short".into()));
    }
    let m = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
    let dim = dim.unwrap_or(m * lat.dimension());
    if sub_vector_count(dim, lat.dimension()) != m {
        return Err(Error::Config(format!("dimension {dim} does not match {m} sub-vectors")));
    }
    let enc = EncodedUpdate::from_bytes(&bytes, &lat, dim)?;
    let dither = Dither::Shared(SharedRandomness::new(cfg.shared_seed, a.user, a.round));
    let h = decode(&enc, &lat, &dither)?;
    let mut out = String::new();
    for v in h {
        let _ = writeln!(out, "{v:.17e}");
    }
    fs::write(&a.output, out)?;
    Ok(())
}
