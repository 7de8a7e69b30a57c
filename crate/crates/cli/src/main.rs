//! `wudiff`: ingest datasets, train models, and run cross-validated experiments.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use log::info;

use config::{flag_name, resolve, RunConfig, KEYS};
use wudiff::diffusion::neighbors_for;
use wudiff::eval::{self, ModelSpec};
use wudiff::{ingest, mf, Dataset, Error, NeighborSets};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

fn cli() -> Command {
    let mut cmd = Command::new("wudiff")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Diffusion-regularized matrix factorization for tag-aware rating prediction")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .global(true)
                .help("key = value settings file; flags override it"),
        );
    for k in KEYS {
        let mut arg = Arg::new(k.name)
            .long(flag_name(k.name))
            .global(true)
            .help(k.help)
            .action(ArgAction::Set);
        if k.switch {
            arg = arg
                .num_args(0..=1)
                .require_equals(true)
                .default_missing_value("true")
                .value_name("BOOL");
        } else {
            arg = arg.value_name("VALUE").allow_negative_numbers(true);
        }
        cmd = cmd.arg(arg);
    }
    cmd.subcommand(Command::new("ingest").about("Parse input files and write the canonical dataset dump"))
        .subcommand(Command::new("train").about("Fit one model on all ratings (minus a validation holdout)"))
        .subcommand(Command::new("eval").about("Cross-validate the configured model"))
        .subcommand(Command::new("sweep").about("Cross-validate a grid over lambda, k_neighbors or alpha"))
        .subcommand(Command::new("groups").about("Per-user-class RMSE of RMF and WUDiff_RMF"))
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Diverged { .. } => EXIT_DIVERGED,
            _ => EXIT_DATA,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_DATA,
        msg: format!("{}: {e}", path.display()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(matches: &ArgMatches) -> Result<(), Failure> {
    let (command, sub) = matches.subcommand().expect("subcommand is required");
    let required: &[&str] = match command {
        "sweep" => &["ratings", "out", "sweep_param", "sweep_values"],
        _ => &["ratings", "out"],
    };
    let cfg = load_config(sub, required)?;
    let header = header_lines(command, &cfg);
    let out = cfg.out.clone().expect("validated");
    fs::create_dir_all(&out).map_err(|e| io_fail(&out, e))?;
    let data = load_dataset(&cfg)?;
    match command {
        "ingest" => cmd_ingest(&cfg, &data, &out, &header),
        "train" => cmd_train(&cfg, &data, &out, &header),
        "eval" => cmd_eval(&cfg, &data, &out, &header),
        "sweep" => cmd_sweep(&cfg, &data, &out, &header),
        "groups" => cmd_groups(&cfg, &data, &out, &header),
        other => unreachable!("unknown subcommand {other}"),
    }
}

fn load_config(sub: &ArgMatches, required: &[&str]) -> Result<RunConfig, Failure> {
    let usage = |msg: String| Failure { code: EXIT_USAGE, msg };
    let file = match sub.get_one::<String>("config") {
        Some(p) => {
            let path = PathBuf::from(p);
            let entries = config::read_config_file(&path).map_err(usage)?;
            Some((path, entries))
        }
        None => None,
    };
    let flags: Vec<(&'static str, String)> = KEYS
        .iter()
        .filter_map(|k| sub.get_one::<String>(k.name).map(|v| (k.name, v.clone())))
        .collect();
    resolve(file.as_ref().map(|(p, e)| (p.as_path(), e.clone())), &flags, required)
        .map_err(|problems| usage(format!("invalid configuration:\n  - {}", problems.join("\n  - "))))
}

/// `#`-prefixed lines identifying the program, the command and every
/// resolved setting.
fn header_lines(command: &str, cfg: &RunConfig) -> Vec<String> {
    let mut lines = vec![
        format!("wudiff {}", env!("CARGO_PKG_VERSION")),
        format!("command = {command}"),
    ];
    lines.extend(cfg.entries().into_iter().map(|(k, v)| format!("{k} = {v}")));
    lines
}

fn write_artifact(path: &Path, header: &[String], body: &[u8]) -> Result<(), Failure> {
    let mut buf = Vec::new();
    for line in header {
        let _ = writeln!(buf, "# {line}");
    }
    buf.extend_from_slice(body);
    fs::write(path, buf).map_err(|e| io_fail(path, e))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset, Failure> {
    let ratings = cfg.ratings.as_deref().expect("validated");
    Ok(ingest::load_tsv(ratings, cfg.tags.as_deref(), &cfg.load_options())?)
}

fn stats_text(d: &Dataset) -> String {
    let assignments: u64 = (0..d.user_count()).map(|u| d.tags.assignments(u)).sum();
    format!(
        "users\t{}\nitems\t{}\ntags\t{}\nratings\t{}\nuser_tag_pairs\t{}\ntag_assignments\t{}\ndensity\t{:.6e}\nr_max\t{}\n",
        d.user_count(),
        d.item_count(),
        d.tag_count(),
        d.ratings.len(),
        d.tags.len(),
        assignments,
        d.density(),
        d.ratings.r_max()
    )
}

fn cmd_ingest(_cfg: &RunConfig, d: &Dataset, out: &Path, header: &[String]) -> Result<(), Failure> {
    ingest::write_canonical(d, out, header)?;
    let stats = stats_text(d);
    write_artifact(&out.join("stats.tsv"), header, stats.as_bytes())?;
    for (name, labels) in [("users", &d.user_labels), ("items", &d.item_labels), ("tags", &d.tag_labels)] {
        let body: String = labels.iter().enumerate().map(|(i, l)| format!("{i}\t{l}\n")).collect();
        write_artifact(&out.join(format!("{name}_labels.tsv")), header, body.as_bytes())?;
    }
    print!("{stats}");
    Ok(())
}

fn cmd_train(cfg: &RunConfig, d: &Dataset, out: &Path, header: &[String]) -> Result<(), Failure> {
    let tc = cfg.train_config();
    let (train, validation) = ingest::holdout(&d.ratings, cfg.cv.validation_fraction, cfg.cv.seed)?;
    let neighbors = match cfg.model_spec() {
        ModelSpec::WudiffRmf(dc) if tc.alpha != 0.0 || cfg.dump_neighbors => neighbors_for(&train, &d.tags, &dc)?,
        _ => NeighborSets::empty(train.user_count()),
    };
    let outcome = if tc.alpha == 0.0 {
        mf::train_rmf(&train, &validation, &tc)?
    } else {
        mf::train(&train, &validation, &neighbors, &tc)?
    };

    let mut model = Vec::new();
    let path = out.join("model.txt");
    outcome.model.write(&mut model, header).map_err(|e| io_fail(&path, e))?;
    fs::write(&path, model).map_err(|e| io_fail(&path, e))?;
    let mut history = Vec::new();
    outcome.write_history_csv(&mut history).map_err(|e| io_fail(out, e))?;
    write_artifact(&out.join("history.csv"), header, &history)?;
    if cfg.dump_neighbors && cfg.model == config::Model::WudiffRmf {
        let mut buf = Vec::new();
        neighbors.write_tsv(&mut buf).map_err(|e| io_fail(out, e))?;
        write_artifact(&out.join("neighbors.tsv"), header, &buf)?;
    }

    let last = outcome.history.iter().find(|h| h.epoch == outcome.best_epoch);
    println!("model\t{}", cfg.model_spec().name());
    println!("epochs_run\t{}", outcome.history.len());
    println!("best_epoch\t{}", outcome.best_epoch);
    if let Some(h) = last {
        println!("train_rmse\t{:.6}", h.train_rmse);
        if let Some(v) = h.validation_rmse {
            println!("validation_rmse\t{v:.6}");
        }
    }
    Ok(())
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    let map: serde_json::Map<String, serde_json::Value> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
        .collect();
    serde_json::Value::Object(map)
}

fn cmd_eval(cfg: &RunConfig, d: &Dataset, out: &Path, header: &[String]) -> Result<(), Failure> {
    let report = eval::run_cv(d, &cfg.model_spec(), &cfg.train, &cfg.cv)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(|e| io_fail(out, e))?;
    write_artifact(&out.join("report.csv"), header, &csv)?;

    let json = serde_json::json!({
        "program": format!("wudiff {}", env!("CARGO_PKG_VERSION")),
        "command": "eval",
        "config": config_json(cfg),
        "report": report,
    });
    let path = out.join("report.json");
    let mut text = serde_json::to_string_pretty(&json).map_err(|e| Failure {
        code: EXIT_DATA,
        msg: format!("cannot serialize report: {e}"),
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_fail(&path, e))?;

    println!("model\t{}", report.model);
    println!("runs\t{}", report.runs.len());
    println!("mae\t{:.4} ± {:.4}", report.mae.mean, report.mae.stddev);
    println!("rmse\t{:.4} ± {:.4}", report.rmse.mean, report.rmse.stddev);
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, d: &Dataset, out: &Path, header: &[String]) -> Result<(), Failure> {
    let param = cfg.sweep_param.expect("validated");
    let points = eval::sweep(d, param, &cfg.sweep_values, &cfg.diffusion, &cfg.train, &cfg.cv)?;
    let mut csv = Vec::new();
    eval::write_sweep_csv(&mut csv, param, &points).map_err(|e| io_fail(out, e))?;
    write_artifact(&out.join("sweep.csv"), header, &csv)?;
    for p in &points {
        println!("{}={}\trmse {:.4} ± {:.4}", param.name(), p.value, p.rmse.mean, p.rmse.stddev);
    }
    Ok(())
}

fn cmd_groups(cfg: &RunConfig, d: &Dataset, out: &Path, header: &[String]) -> Result<(), Failure> {
    let groups = cfg.group_spec().map_err(|msg| Failure { code: EXIT_USAGE, msg })?;
    let models = [ModelSpec::Rmf, ModelSpec::WudiffRmf(cfg.diffusion)];
    let report = eval::group_report(d, &models, &groups, &cfg.train, &cfg.cv)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(|e| io_fail(out, e))?;
    write_artifact(&out.join("groups.csv"), header, &csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}
