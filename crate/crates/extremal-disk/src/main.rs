use clap::{Parser, Subcommand};
use extremal_disk::experiment::{
    convergence_study, parse_boundary, run_experiment, study_csv, ExperimentConfig,
    ExperimentError, HopfArtifact, SolveArtifact,
};
use extremal_disk::fuchsian::{
    automorphic_phi_l1_growth, transfer_identity_check, FuchsianGroup, FundamentalDomain,
};
use extremal_disk::hairs::{detect_hairs, tip_measure};
use extremal_disk::hopf::{hopf_field, reich_strebel_check, TestFunction};
use extremal_disk::lobes::{decompose_lobes, total_varg, BoundaryPair};
use extremal_disk::mesh::TriMeshMap;
use num_complex::Complex64;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "extremal-disk",
    version,
    about = "Extremal mappings of finite distortion on the unit disk"
)]
struct Cli {
    /// JSON experiment configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed override recorded in the artifacts
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread budget (the solver is deterministic and serial; values
    /// above 1 are accepted and ignored)
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the configured energy and write the solution bundle
    Solve,
    /// Hopf-differential diagnostics for a saved solution
    HopfCheck {
        /// result.json produced by `solve`
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Lobe decomposition of a pair of monotone circle maps
    Lobes {
        /// e.g. "sin:a=0.4"
        #[arg(long)]
        alpha: String,
        #[arg(long, default_value = "id")]
        beta: String,
        /// boundary sample count
        #[arg(long, default_value_t = 4096)]
        n: usize,
    },
    /// Hair detection and tip measure for a saved solution
    Hairs {
        /// result.json produced by `solve`
        #[arg(long = "in")]
        input: PathBuf,
        /// collapse tolerance, or "auto"
        #[arg(long, default_value = "auto")]
        tol: String,
        /// number of probe circles
        #[arg(long, default_value_t = 8)]
        probes: usize,
    },
    /// Fuchsian group diagnostics
    Fuchsian {
        /// "octagon", "cyclic", or "trivial"
        #[arg(long, default_value = "octagon")]
        group: String,
        /// word-length cutoff for partial sums
        #[arg(long, default_value_t = 4)]
        cutoff: usize,
        /// "transfer" or "growth"
        #[arg(long, default_value = "transfer")]
        check: String,
    },
    /// Convergence study across refinement levels
    Study {
        /// comma-separated refinement levels (at least three)
        #[arg(long, value_delimiter = ',', default_values_t = [2u32, 3, 4])]
        refinements: Vec<u32>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ExperimentError> {
    let mut config = match &cli.config {
        Some(path) => serde_json::from_slice(&std::fs::read(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<(), ExperimentError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

fn load_solution(path: &std::path::Path) -> Result<SolveArtifact, ExperimentError> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

fn run(cli: &Cli) -> Result<(), ExperimentError> {
    if cli.threads == 0 {
        return Err(ExperimentError::Config("--threads must be at least 1".into()));
    }
    let config = load_config(cli)?;
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Solve => {
            let bundle = run_experiment(&config, &cli.out)?;
            println!(
                "solved: energy {} after {} iterations ({} artifacts, hash {})",
                bundle.report.final_energy,
                bundle.report.iterations,
                bundle.files.len(),
                bundle.config_hash
            );
        }
        Command::HopfCheck { input } => {
            let artifact = load_solution(input)?;
            let gauge = extremal_disk::experiment::parse_gauge(&artifact.config.gauge)?;
            let weight = extremal_disk::experiment::parse_weight(&artifact.config.weight)?;
            let h = match artifact.config.side {
                extremal_disk::gauge::EnergySide::HSide => &artifact.map,
                extremal_disk::gauge::EnergySide::FSide => &artifact.inverse,
            };
            let field = hopf_field(h, &gauge, &weight)?;
            let residuals = extremal_disk::hopf::inner_variation_residual(
                h,
                &gauge,
                &weight,
                &TestFunction::battery(),
                extremal_disk::hopf::VariationSide::HSideP,
            )?;
            let identity = TriMeshMap::identity(h.mesh.clone());
            let (lhs, rhs) = reich_strebel_check(&field, &identity)?;
            let report = HopfArtifact {
                config_hash: artifact.config_hash.clone(),
                seed: artifact.config.seed,
                l1_norm: field.l1_norm,
                dbar_l1: field.dbar_l1,
                residuals,
                lhs,
                rhs,
            };
            write_json(&cli.out.join("hopf.json"), &report)?;
            let mut csv = String::from("triangle,re,im,abs\n");
            for (t, phi) in field.phi.iter().enumerate() {
                csv.push_str(&format!("{t},{},{},{}\n", phi.re, phi.im, phi.norm()));
            }
            std::fs::write(cli.out.join("phi_abs.csv"), csv)?;
            println!(
                "hopf-check: l1_norm {} dbar_l1 {} lhs {} rhs {}",
                report.l1_norm, report.dbar_l1, report.lhs, report.rhs
            );
        }
        Command::Lobes { alpha, beta, n } => {
            let alpha_spec = parse_boundary(alpha)?;
            let beta_spec = parse_boundary(beta)?;
            let pair =
                BoundaryPair::from_fns(*n, |t| alpha_spec.angle(t), |t| beta_spec.angle(t))?;
            let decomp = decompose_lobes(&pair, 1e-9)?;
            let total = total_varg(&decomp);
            #[derive(Serialize)]
            struct LobeReport<'a> {
                alpha: &'a str,
                beta: &'a str,
                n: usize,
                total_varg: f64,
                x_measure: f64,
                decomposition: &'a extremal_disk::lobes::LobeDecomposition,
            }
            write_json(
                &cli.out.join("lobes.json"),
                &LobeReport {
                    alpha,
                    beta,
                    n: *n,
                    total_varg: total,
                    x_measure: decomp.x_measure,
                    decomposition: &decomp,
                },
            )?;
            let mut csv = String::from("lobe,sign,re,im\n");
            for (i, lobe) in decomp.lobes.iter().enumerate() {
                for z in &lobe.curve {
                    csv.push_str(&format!("{i},{},{},{}\n", lobe.sign, z.re, z.im));
                }
            }
            std::fs::write(cli.out.join("lobe_curves.csv"), csv)?;
            println!(
                "lobes: {} lobes, total varg {}, coincidence measure {}",
                decomp.lobes.len(),
                total,
                decomp.x_measure
            );
        }
        Command::Hairs { input, tol, probes } => {
            let artifact = load_solution(input)?;
            let collapse_tol = match tol.as_str() {
                "auto" => None,
                s => Some(s.parse::<f64>().map_err(|_| {
                    ExperimentError::Config(format!("bad tolerance `{s}`"))
                })?),
            };
            if *probes == 0 {
                return Err(ExperimentError::Config("--probes must be positive".into()));
            }
            let report = detect_hairs(&artifact.map, collapse_tol)?;
            let radii: Vec<f64> = (1..=*probes)
                .map(|k| 1.0 - 0.5_f64.powi(k as i32))
                .collect();
            let tips = tip_measure(&report, &artifact.map, &radii)?;
            #[derive(Serialize)]
            struct HairOutput<'a> {
                config_hash: &'a str,
                report: &'a extremal_disk::hairs::HairReport,
                tips: &'a extremal_disk::hairs::TipMeasure,
            }
            write_json(
                &cli.out.join("hairs.json"),
                &HairOutput {
                    config_hash: &artifact.config_hash,
                    report: &report,
                    tips: &tips,
                },
            )?;
            let mut csv = String::from("hair,vertex,domain_re,domain_im,image_re,image_im\n");
            for (i, hair) in report.hairs.iter().enumerate() {
                for &v in &hair.fiber_vertices {
                    let z = artifact.map.mesh.vertices[v];
                    let w = artifact.map.image_positions[v];
                    csv.push_str(&format!("{i},{v},{},{},{},{}\n", z.re, z.im, w.re, w.im));
                }
            }
            std::fs::write(cli.out.join("hair_fibers.csv"), csv)?;
            println!(
                "hairs: {} detected, tip measure {}",
                report.hairs.len(),
                tips.z_estimate
            );
        }
        Command::Fuchsian {
            group,
            cutoff,
            check,
        } => {
            let group = match group.as_str() {
                "octagon" => FuchsianGroup::octagon(),
                "cyclic" => FuchsianGroup::cyclic(2.0),
                "trivial" => FuchsianGroup::trivial(),
                other => {
                    return Err(ExperimentError::Config(format!("unknown group `{other}`")))
                }
            };
            let domain = if group.generators.len() == 4 {
                FundamentalDomain::octagon(1)?
            } else {
                FundamentalDomain::disk(1)?
            };
            match check.as_str() {
                "transfer" => {
                    let report = transfer_identity_check(|_| 1.0, 1.0, &domain, &group, *cutoff);
                    write_json(&cli.out.join("fuchsian.json"), &report)?;
                    println!(
                        "fuchsian transfer: lhs {} rhs {} (tails {} / {})",
                        report.lhs, report.rhs, report.lhs_tail, report.rhs_tail
                    );
                }
                "growth" => {
                    let growth = automorphic_phi_l1_growth(
                        |_| Complex64::new(1.0, 0.0),
                        &domain,
                        &group,
                        *cutoff,
                    );
                    write_json(&cli.out.join("fuchsian.json"), &growth)?;
                    let last = growth.last().copied().unwrap_or((0, 0.0));
                    println!(
                        "fuchsian growth: {} elements, cumulative mass {}",
                        last.0, last.1
                    );
                }
                other => {
                    return Err(ExperimentError::Config(format!("unknown check `{other}`")))
                }
            }
        }
        Command::Study { refinements } => {
            let table = convergence_study(&config, refinements)?;
            write_json(&cli.out.join("study.json"), &table)?;
            std::fs::write(cli.out.join("study.csv"), study_csv(&table))?;
            println!(
                "study ({} / {}): dbar order {:?}, oracle order {:?}",
                config.boundary, config.gauge, table.dbar_order, table.oracle_order
            );
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
