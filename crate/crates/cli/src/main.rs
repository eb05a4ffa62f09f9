use std::fs::OpenOptions;
use std::io::{BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ipcmap::fetch::{
    fetch_all, harvest_query, CachingTransport, Database, FetchLimits, FixtureDir, SearchSpec, Transport,
};
use ipcmap::ingest::write_canonical;
use ipcmap::pipeline::{self, Config};
use ipcmap::{Error, Level};

#[derive(Parser)]
#[command(name = "ipcmap", version, about = "Citation-based IPC maps, overlays and diversity")]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download search results as canonical records.
    Fetch(FetchArgs),
    /// Build basemaps from a canonical corpus.
    Basemap {
        corpus: PathBuf,
        #[arg(long, default_value = "both")]
        level: LevelArg,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the aggregated citation matrices.
        #[arg(long)]
        write_matrix: bool,
        #[command(flatten)]
        settings: Settings,
    },
    /// Overlay a patent set on existing basemaps.
    Overlay {
        patent_set: PathBuf,
        #[arg(long)]
        basemap: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// One overlay per year of the patent set.
    Animate {
        patent_set: PathBuf,
        #[arg(long)]
        basemap: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        from: Option<i32>,
        #[arg(long)]
        to: Option<i32>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Print Rao-Stirling diversity at both levels.
    Diversity {
        patent_set: PathBuf,
        #[arg(long)]
        basemap: PathBuf,
    },
    /// Parse and re-emit output files; fails unless every file is reproduced byte for byte.
    FormatsCheck {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    #[value(name = "3")]
    Three,
    #[value(name = "4")]
    Four,
    Both,
}

impl LevelArg {
    fn levels(self) -> Vec<Level> {
        match self {
            LevelArg::Three => vec![Level::Three],
            LevelArg::Four => vec![Level::Four],
            LevelArg::Both => Level::BOTH.to_vec(),
        }
    }
}

#[derive(Args, Default)]
struct Settings {
    /// key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// mds or kamada_kawai
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Cosine threshold for the Pajek network.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    louvain_trials: Option<usize>,
    /// Index entries kept in memory before spilling to disk.
    #[arg(long)]
    memory_cap: Option<usize>,
    #[arg(long)]
    hide_empty_labels: bool,
}

impl Settings {
    fn resolve(&self) -> ipcmap::Result<Config> {
        let mut c = Config::default();
        if let Some(p) = &self.config {
            c.parse_into(&std::fs::read_to_string(p)?)?;
        }
        let flags: [(&str, Option<String>); 8] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("max_iters", self.max_iters.map(|v| v.to_string())),
            ("tolerance", self.tolerance.map(|v| v.to_string())),
            ("algorithm", self.algorithm.clone()),
            ("restarts", self.restarts.map(|v| v.to_string())),
            ("tau", self.tau.map(|v| v.to_string())),
            ("louvain_trials", self.louvain_trials.map(|v| v.to_string())),
            ("memory_cap", self.memory_cap.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                c.set(k, &v)?;
            }
        }
        if self.hide_empty_labels {
            c.hide_empty_labels = true;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct FetchArgs {
    /// Search expression, e.g. "icn/nl and isd/2007$$".
    #[arg(long, required_unless_present = "url")]
    query: Option<String>,
    /// Take database, query and start from a result-list or record url.
    #[arg(long, conflicts_with_all = ["query", "db"])]
    url: Option<String>,
    #[arg(long, default_value = "grant")]
    db: DbArg,
    #[arg(long, default_value_t = 1)]
    start: u64,
    /// Stop after this many records.
    #[arg(long)]
    max: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    delay_ms: u64,
    /// Read-through page cache.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Serve every page from DIR instead of the network.
    #[arg(long, conflicts_with = "live")]
    offline_fixtures: Option<PathBuf>,
    /// Discard cached pages before fetching.
    #[arg(long)]
    overwrite: bool,
    /// Allow network access.
    #[arg(long)]
    live: bool,
    /// Canonical records are appended here.
    #[arg(long, short, default_value = "records.tsv")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DbArg {
    Grant,
    Application,
}

struct Http {
    agent: ureq::Agent,
}

impl Http {
    fn new() -> Http {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .user_agent(concat!("ipcmap/", env!("CARGO_PKG_VERSION")))
            .build();
        Http { agent: config.into() }
    }
}

impl Transport for Http {
    fn get(&mut self, url: &str) -> ipcmap::Result<Vec<u8>> {
        let fail = |e: &dyn std::fmt::Display| Error::Transport {
            url: url.to_string(),
            reason: e.to_string(),
        };
        let mut resp = self.agent.get(url).call().map_err(|e| fail(&e))?;
        let mut body = Vec::new();
        resp.body_mut()
            .as_reader()
            .read_to_end(&mut body)
            .map_err(|e| fail(&e))?;
        Ok(body)
    }
}

struct NoNetwork;

impl Transport for NoNetwork {
    fn get(&mut self, url: &str) -> ipcmap::Result<Vec<u8>> {
        Err(Error::Transport {
            url: url.to_string(),
            reason: "page not cached and --live not given".into(),
        })
    }
}

fn fetch(args: FetchArgs) -> ipcmap::Result<ExitCode> {
    let spec = match &args.url {
        Some(u) => harvest_query(u)?,
        None => SearchSpec {
            database: match args.db {
                DbArg::Grant => Database::Grant,
                DbArg::Application => Database::Application,
            },
            query: args.query.clone().unwrap_or_default(),
            start: args.start,
        },
    };
    let limits = FetchLimits {
        max: args.max,
        delay: if args.live {
            Duration::from_millis(args.delay_ms)
        } else {
            Duration::ZERO
        },
        ..Default::default()
    };
    let inner: Box<dyn Transport> = match (&args.offline_fixtures, args.live) {
        (Some(dir), _) => Box::new(FixtureDir { dir: dir.clone() }),
        (None, true) => Box::new(Http::new()),
        (None, false) if args.cache_dir.is_some() => Box::new(NoNetwork),
        (None, false) => {
            return Err(Error::Config(
                "no page source: give --live, --offline-fixtures DIR or --cache-dir DIR".into(),
            ))
        }
    };
    let transport: Box<dyn Transport> = match &args.cache_dir {
        Some(dir) => Box::new(CachingTransport::new(inner, dir, args.overwrite)?),
        None => inner,
    };
    let file = OpenOptions::new().create(true).append(true).open(&args.out)?;
    let mut w = BufWriter::new(file);
    let report = fetch_all(&spec, transport, |r| Ok(write_canonical(&mut w, &r)?), &limits);
    w.flush()?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(match &report.error {
        None => ExitCode::SUCCESS,
        Some(e) if e.starts_with("transport error") => ExitCode::from(4),
        Some(_) => ExitCode::from(3),
    })
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => 2,
        e if e.is_transport() => 4,
        _ => 3,
    }
}

fn run(cli: Cli) -> ipcmap::Result<ExitCode> {
    match cli.command {
        Command::Fetch(args) => return fetch(args),
        Command::Basemap {
            corpus,
            level,
            out,
            write_matrix,
            settings,
        } => {
            let s = pipeline::cmd_basemap(&corpus, &level.levels(), &out, &settings.resolve()?, write_matrix)?;
            for r in &s.reports {
                print!("{r}");
            }
            for ((l, stress), (_, k)) in s.stress.iter().zip(&s.clusters) {
                println!("level {l}: stress {stress:.6}, {k} clusters");
            }
            if s.malformed > 0 {
                eprintln!("{} malformed records skipped", s.malformed);
            }
        }
        Command::Overlay {
            patent_set,
            basemap,
            out,
            settings,
        } => {
            let s = pipeline::cmd_overlay(&patent_set, &basemap, &out, &settings.resolve()?)?;
            for o in &s.overlays {
                let d = o.diversity.map(|d| format!("{d:.3}")).unwrap_or_else(|| "NA".into());
                println!(
                    "level {}: {} patents, {} classes, {} skipped, diversity {d}",
                    o.level,
                    o.patent_count,
                    o.weights.len(),
                    o.skipped
                );
            }
        }
        Command::Animate {
            patent_set,
            basemap,
            out,
            from,
            to,
            settings,
        } => {
            let range = match (from, to) {
                (Some(a), Some(b)) if a <= b => Some((a, b)),
                (None, None) => None,
                _ => return Err(Error::Config("--from and --to go together, from <= to".into())),
            };
            let s = pipeline::cmd_animate(&patent_set, &basemap, &out, &settings.resolve()?, range)?;
            for (y, n) in &s.years {
                println!("{y}\t{n}");
            }
        }
        Command::Diversity { patent_set, basemap } => {
            let (d3, d4) = pipeline::diversity(&patent_set, &basemap)?;
            print!("{}", ipcmap::analysis::format_diversity(d3, d4));
        }
        Command::FormatsCheck { files } => {
            let mut ok = true;
            for f in &files {
                let same = pipeline::check_format(f)?;
                println!("{}\t{}", if same { "ok" } else { "DIFFERS" }, f.display());
                ok &= same;
            }
            if !ok {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
