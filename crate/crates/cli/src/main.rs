use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use bigworld::builder::{build, resolve, spatial_name, stats, SpatialName, Stats, WorldBigraph};
use bigworld::dataset::{fetch_tree, load_hierarchy};
use bigworld::overpass::{Fetcher, DEFAULT_ENDPOINT, ENDPOINT_ENV};
use bigworld::persist::{load, save, to_dot};
use bigworld::rewrite::{rewrite_first, step};
use bigworld::rules::{add_agent, multicast, rule_by_name, unicast};

/// Bigraphs of the real world built from OpenStreetMap.
#[derive(Debug, Parser)]
#[command(name = "bigworld", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download a region and its descendant boundaries into the cache.
    Fetch {
        #[arg(long)]
        region: String,
        #[arg(long, env = ENDPOINT_ENV, default_value = DEFAULT_ENDPOINT)]
        endpoint: String,
        #[arg(long, default_value = "cache")]
        cache_dir: PathBuf,
    },
    /// Build the world bigraph of a cached region.
    Build {
        #[arg(long)]
        region: String,
        #[arg(long)]
        cache_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print node, edge and entity counts as TSV.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Print the spatial name of a node.
    SpatialName {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        node: usize,
    },
    /// Print the node id named by a spatial name.
    Resolve {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        name: String,
    },
    /// Add an Agent under the named place.
    AgentAdd {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        at: String,
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a reaction rule once, or write every successor with --all.
    React {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        rule: String,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deliver a message to one Agent.
    Unicast {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        to: String,
        #[arg(long)]
        message_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deliver a message to every Agent in an area.
    Multicast {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        area: String,
        #[arg(long)]
        message_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a Graphviz rendering.
    ExportDot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn open(path: &Path) -> Result<WorldBigraph> {
    load(path).with_context(|| format!("loading {}", path.display()))
}

fn write(wb: &WorldBigraph, path: &Path) -> Result<()> {
    save(wb, path).with_context(|| format!("writing {}", path.display()))
}

/// `out.json` → `out.<i>.json`.
fn numbered(path: &Path, i: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{i}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{i}"),
    };
    path.with_file_name(name)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fetch {
            region,
            endpoint,
            cache_dir,
        } => {
            let files = fetch_tree(&Fetcher::new(endpoint, cache_dir), &region)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Build { region, cache_dir, out } => {
            let h = load_hierarchy(&cache_dir, &region)?;
            let wb = build(&h)?;
            write(&wb, &out)?;
        }
        Command::Stats { input } => {
            let s = stats(&open(&input)?);
            println!("{}\n{}", Stats::HEADER, s.tsv_row());
        }
        Command::SpatialName { input, node } => {
            println!("{}", spatial_name(&open(&input)?, node)?);
        }
        Command::Resolve { input, name } => match resolve(&open(&input)?, &SpatialName::parse(&name))? {
            Some(v) => println!("{v}"),
            None => bail!("{name}: not found"),
        },
        Command::AgentAdd { input, at, id, out } => {
            let wb = add_agent(&open(&input)?, &SpatialName::parse(&at), &id)?;
            write(&wb, &out)?;
        }
        Command::React { input, rule, all, out } => {
            let wb = open(&input)?;
            let rule = rule_by_name(&rule)?;
            if all {
                let succ = step(std::slice::from_ref(&rule), &wb.bigraph)?;
                let n = succ.len();
                for (i, (_, b)) in succ.into_iter().enumerate() {
                    write(&WorldBigraph::new(b), &numbered(&out, i))?;
                }
                println!("{n}");
            } else {
                match rewrite_first(&rule, &wb.bigraph)? {
                    Some(b) => write(&WorldBigraph::new(b), &out)?,
                    None => bail!("{} does not apply", rule.name()),
                }
            }
        }
        Command::Unicast {
            input,
            to,
            message_id,
            out,
        } => {
            let (wb, delivered) = unicast(&open(&input)?, &message_id, &SpatialName::parse(&to))?;
            write(&wb, &out)?;
            println!("delivered\t{delivered}");
        }
        Command::Multicast {
            input,
            area,
            message_id,
            out,
        } => {
            let (wb, recipients) = multicast(&open(&input)?, &message_id, &SpatialName::parse(&area))?;
            write(&wb, &out)?;
            println!("recipients\t{recipients}");
        }
        Command::ExportDot { input, out } => {
            let dot = to_dot(&open(&input)?.bigraph);
            std::fs::write(&out, dot).with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
