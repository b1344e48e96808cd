//! Runs the default benchmark protocol over a range of seeds and prints one
//! line per pair. Usage: `sweep <first_seed> <count> [key=value ...]`.

use xsreg::harness::{evaluate_pair, PipelineConfig, SyntheticPairSpec};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let first: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(0);
    let count: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let mut config = PipelineConfig::default();
    let mut spec = SyntheticPairSpec::default();
    for kv in args.iter().skip(2) {
        let (k, v) = kv.split_once('=').expect("key=value");
        if let Some(field) = k.strip_prefix("spec.") {
            match field {
                "overlap" => spec.overlap = v.parse().unwrap(),
                "noise" => spec.noise_sigma = v.parse().unwrap(),
                "points" => {
                    spec.base = xsreg::harness::BaseCloud::Procedural {
                        generator: xsreg::harness::SceneKind::Room,
                        points: v.parse().unwrap(),
                    }
                }
                _ => panic!("unknown spec field {field}"),
            }
        } else {
            config.set(k, v).unwrap();
        }
    }
    let (mut ok, mut re, mut te) = (0, 0.0, 0.0);
    for seed in first..first + count {
        let r = evaluate_pair(&SyntheticPairSpec { seed, ..spec.clone() }, &config);
        match r.evaluation {
            Some(e) => {
                println!(
                    "seed {seed:3} vox {:.3}/{:.3} pts {}/{} init_ir {:.3} final {} ir {:.3} re {:7.3} te {:.4} t {:.2}s",
                    r.voxel_sizes[0], r.voxel_sizes[1], r.source_points, r.target_points,
                    r.initial_ir.unwrap_or(0.0), r.final_count, e.ir, e.re, e.te, r.timings.total()
                );
                if std::env::var_os("SWEEP_TIMINGS").is_some() {
                    println!("    {:?}", r.timings);
                }
                if e.registered {
                    ok += 1;
                    re += e.re;
                    te += e.te;
                }
            }
            None => println!("seed {seed:3} failed: {}", r.error.unwrap_or_default()),
        }
    }
    println!("registered {ok}/{count} mean re {:.3} te {:.4}", re / ok.max(1) as f64, te / ok.max(1) as f64);
}
