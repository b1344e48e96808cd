use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use serde_json::json;

use xsreg::harness::benchmark::SpecList;
use xsreg::harness::{
    generate_pair, read_point_cloud, run_ablation, run_benchmark, run_pipeline, write_correspondence_visualization,
    write_point_cloud, PipelineConfig, PlyFormat, StageTimings, SyntheticPairSpec, CONFIG_KEYS,
};
use xsreg::{Error, RigidTransform};

const DEFAULT_ABLATION_PAIRS: u64 = 20;

fn config_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .value_parser(value_parser!(PathBuf))
            .help("Pipeline configuration file (key = value lines)"),
    );
    CONFIG_KEYS.iter().fold(cmd, |cmd, (key, help)| {
        cmd.arg(
            Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .help(*help)
                .help_heading("Configuration overrides"),
        )
    })
}

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .value_parser(value_parser!(PathBuf))
        .help(help)
}

fn cli() -> Command {
    Command::new("xsreg")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Cross-source point cloud registration")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("verbose")
                .short('v')
                .long("verbose")
                .action(ArgAction::Count)
                .global(true)
                .help("Log more (repeat for debug output)"),
        )
        .subcommand(config_args(
            Command::new("register")
                .about("Register a source cloud onto a target cloud")
                .arg(
                    Arg::new("source")
                        .required(true)
                        .value_parser(value_parser!(PathBuf))
                        .help("Source PLY"),
                )
                .arg(
                    Arg::new("target")
                        .required(true)
                        .value_parser(value_parser!(PathBuf))
                        .help("Target PLY"),
                )
                .arg(path_arg("out", "Write the transform JSON here instead of stdout"))
                .arg(path_arg("viz", "Write a correspondence visualization PLY")),
        ))
        .subcommand(config_args(
            Command::new("bench")
                .about("Run the pipeline over synthetic pairs and report metrics")
                .arg(path_arg("specs", "JSON pair specs").required(true))
                .arg(path_arg("report", "Output report JSON").required(true)),
        ))
        .subcommand(
            Command::new("synth")
                .about("Generate synthetic pairs as PLY files with ground truth")
                .arg(path_arg("spec", "JSON pair spec or spec list").required(true))
                .arg(path_arg("out-dir", "Output directory").required(true))
                .arg(
                    Arg::new("ascii")
                        .long("ascii")
                        .action(ArgAction::SetTrue)
                        .help("Write ASCII PLY instead of binary"),
                ),
        )
        .subcommand(config_args(
            Command::new("ablate")
                .about("Run the five ablation rows over synthetic pairs")
                .arg(path_arg("report", "Output report JSON").required(true))
                .arg(path_arg("specs", "JSON pair specs (default: a seed sweep of the default spec)"))
                .arg(
                    Arg::new("pairs")
                        .long("pairs")
                        .value_name("N")
                        .value_parser(value_parser!(u64))
                        .conflicts_with("specs")
                        .help("Number of default pairs when no spec file is given [default: 20]"),
                ),
        ))
}

/// Default, then the config file, then command-line overrides.
fn load_config(m: &ArgMatches) -> xsreg::Result<PipelineConfig> {
    let mut config = match m.get_one::<PathBuf>("config") {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for (key, _) in CONFIG_KEYS {
        if let Some(value) = m.get_one::<String>(key) {
            config.set(key, value)?;
        }
    }
    config.validate()?;
    Ok(config)
}

fn transform_json(t: &RigidTransform) -> serde_json::Value {
    let r = t.rotation();
    let rows: Vec<[f64; 3]> = (0..3).map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]).collect();
    let tr = t.translation();
    json!({ "rotation": rows, "translation": [tr.x, tr.y, tr.z] })
}

fn write_json(path: &Path, value: &serde_json::Value) -> xsreg::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn register(m: &ArgMatches) -> xsreg::Result<()> {
    let config = load_config(m)?;
    let source = read_point_cloud(m.get_one::<PathBuf>("source").unwrap())?;
    let target = read_point_cloud(m.get_one::<PathBuf>("target").unwrap())?;
    log::info!("registering {} source points onto {} target points", source.len(), target.len());
    let out = run_pipeline(&source, &target, &config)?;
    let timings: &StageTimings = &out.timings;
    let mut doc = transform_json(&out.transform);
    doc["timings"] = serde_json::to_value(timings)?;
    doc["correspondences"] = json!({ "initial": out.initial.len(), "final": out.correspondences.len() });

    if let Some(path) = m.get_one::<PathBuf>("viz") {
        // without ground truth, edges are colored by agreement with the estimate
        write_correspondence_visualization(
            path,
            &source,
            &target,
            &out.correspondences,
            &out.transform,
            config.thresholds.tau1,
        )?;
    }
    match m.get_one::<PathBuf>("out") {
        Some(path) => write_json(path, &doc)?,
        None => println!("{}", serde_json::to_string_pretty(&doc)?),
    }
    Ok(())
}

fn bench(m: &ArgMatches) -> xsreg::Result<()> {
    let config = load_config(m)?;
    let specs = SpecList::load(m.get_one::<PathBuf>("specs").unwrap())?;
    let report = run_benchmark(&specs, &config)?;
    report.write(m.get_one::<PathBuf>("report").unwrap())?;
    let a = &report.aggregate;
    println!(
        "pairs {} registered {} RR {:.3} FMR {:.3} mean IR {:.3}",
        a.pairs, a.registered, a.rr, a.fmr, a.mean_ir
    );
    Ok(())
}

/// A single spec object or anything [`SpecList`] accepts.
fn load_specs(path: &Path) -> xsreg::Result<(Vec<SyntheticPairSpec>, bool)> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(list) = serde_json::from_str::<SpecList>(&text) {
        return Ok((list.expand(), false));
    }
    Ok((vec![serde_json::from_str(&text)?], true))
}

fn synth(m: &ArgMatches) -> xsreg::Result<()> {
    let (specs, single) = load_specs(m.get_one::<PathBuf>("spec").unwrap())?;
    let out_dir = m.get_one::<PathBuf>("out-dir").unwrap();
    let format = if m.get_flag("ascii") {
        PlyFormat::Ascii
    } else {
        PlyFormat::BinaryLittleEndian
    };
    for spec in &specs {
        let dir = if single {
            out_dir.clone()
        } else {
            out_dir.join(format!("seed_{}", spec.seed))
        };
        std::fs::create_dir_all(&dir)?;
        let pair = generate_pair(spec)?;
        write_point_cloud(dir.join("source.ply"), &pair.source, format)?;
        write_point_cloud(dir.join("target.ply"), &pair.target, format)?;
        let mut doc = transform_json(&pair.gt);
        doc["voxel_sizes"] = json!(pair.voxel_sizes);
        doc["spec"] = serde_json::to_value(spec)?;
        write_json(&dir.join("ground_truth.json"), &doc)?;
        println!(
            "{}: {} source / {} target points",
            dir.display(),
            pair.source.len(),
            pair.target.len()
        );
    }
    Ok(())
}

fn ablate(m: &ArgMatches) -> xsreg::Result<()> {
    let config = load_config(m)?;
    let specs = match m.get_one::<PathBuf>("specs") {
        Some(path) => SpecList::load(path)?,
        None => SpecList::Sweep {
            template: SyntheticPairSpec::default(),
            first_seed: 0,
            count: *m.get_one::<u64>("pairs").unwrap_or(&DEFAULT_ABLATION_PAIRS) as usize,
        }
        .expand(),
    };
    let report = run_ablation(&specs, &config)?;
    report.write(m.get_one::<PathBuf>("report").unwrap())?;
    for row in &report.rows {
        let a = &row.report.aggregate;
        println!("{:<8} RR {:.3} FMR {:.3} mean IR {:.3}", row.name, a.rr, a.fmr, a.mean_ir);
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::SpecTooAggressive(..) => 4,
        Error::Io(_) | Error::Parse { .. } | Error::Json(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            // malformed invocations count as invalid configuration
            return if usage_error { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    let level = match matches.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let (name, m) = matches.subcommand().expect("subcommand is required");
    let result = match name {
        "register" => register(m),
        "bench" => bench(m),
        "synth" => synth(m),
        "ablate" => ablate(m),
        _ => unreachable!("unknown subcommand {name}"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
