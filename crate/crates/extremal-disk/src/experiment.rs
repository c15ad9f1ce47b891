//! Experiment drivers: configuration parsing, reproducible artifact
//! emission (JSON + CSV), and refinement studies with fitted error orders.

use crate::fuchsian::{transfer_identity_check, FuchsianError, FuchsianGroup, FundamentalDomain};
use crate::gauge::{DistortionGauge, EnergyError, EnergySide, WeightField};
use crate::hairs::{detect_hairs, tip_measure, HairError, HairReport, TipMeasure};
use crate::hopf::{
    hopf_field, inner_variation_residual, HopfError, TestFunction, VariationSide,
};
use crate::lobes::{decompose_lobes, total_varg, BoundaryPair, LobeDecomposition, LobeError};
use crate::mesh::{build_disk_mesh, MeshError, TriMeshMap};
use crate::solver::{
    minimize_energy, poisson_extension, pseudo_inverse, BoundarySpec, SolveOptions, SolveReport,
    SolverError, Termination,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("solver: {0}")]
    Solver(#[from] SolverError),
    #[error("solver did not converge (gradient norm {0:.3e})")]
    NonConvergence(f64),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("energy: {0}")]
    Energy(#[from] EnergyError),
    #[error("hopf: {0}")]
    Hopf(#[from] HopfError),
    #[error("lobes: {0}")]
    Lobes(#[from] LobeError),
    #[error("hairs: {0}")]
    Hairs(#[from] HairError),
    #[error("fuchsian: {0}")]
    Fuchsian(#[from] FuchsianError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// Process exit code: 2 nonconvergence, 3 infeasible input, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::NonConvergence(_) => 2,
            ExperimentError::Io(_) | ExperimentError::Json(_) => 4,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisToggles {
    pub hopf: bool,
    pub lobes: bool,
    pub hairs: bool,
    pub fuchsian: bool,
}

impl Default for AnalysisToggles {
    fn default() -> Self {
        AnalysisToggles {
            hopf: true,
            lobes: false,
            hairs: false,
            fuchsian: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub gauge: String,
    pub weight: String,
    pub boundary: String,
    pub side: EnergySide,
    pub n_boundary: usize,
    pub refinement: u32,
    pub solver: SolveOptions,
    pub analyses: AnalysisToggles,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            gauge: "power:p=2".into(),
            weight: "const".into(),
            boundary: "sin:a=0.3".into(),
            side: EnergySide::FSide,
            n_boundary: 16,
            refinement: 3,
            solver: SolveOptions::default(),
            analyses: AnalysisToggles::default(),
            seed: 0x5EED,
        }
    }
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn key_value(spec: &str, key: &str) -> Result<f64, ExperimentError> {
    let (_, rest) = spec
        .split_once(':')
        .ok_or_else(|| ExperimentError::Config(format!("missing parameters in `{spec}`")))?;
    for part in rest.split(',') {
        if let Some((k, v)) = part.split_once('=') {
            if k == key {
                return v
                    .parse()
                    .map_err(|_| ExperimentError::Config(format!("bad number `{v}` in `{spec}`")));
            }
        }
    }
    Err(ExperimentError::Config(format!(
        "parameter `{key}` missing in `{spec}`"
    )))
}

pub fn parse_gauge(spec: &str) -> Result<DistortionGauge, ExperimentError> {
    match spec.split(':').next().unwrap_or("") {
        "power" => Ok(DistortionGauge::power(key_value(spec, "p")?)),
        "exp" => Ok(DistortionGauge::Exponential {
            p: key_value(spec, "p")?,
        }),
        other => Err(ExperimentError::Config(format!("unknown gauge `{other}`"))),
    }
}

pub fn parse_weight(spec: &str) -> Result<WeightField, ExperimentError> {
    WeightField::by_id(spec)
        .ok_or_else(|| ExperimentError::Config(format!("unknown weight `{spec}`")))
}

pub fn parse_boundary(spec: &str) -> Result<BoundarySpec, ExperimentError> {
    match spec.split(':').next().unwrap_or("") {
        "id" | "identity" => Ok(BoundarySpec::Identity),
        "sin" => Ok(BoundarySpec::Sin {
            a: key_value(spec, "a")?,
        }),
        "rot" => Ok(BoundarySpec::Rotation {
            theta0: key_value(spec, "theta0")?,
        }),
        "mobius" => Ok(BoundarySpec::Mobius {
            a: [key_value(spec, "a")?, 0.0],
        }),
        other => Err(ExperimentError::Config(format!(
            "unknown boundary `{other}`"
        ))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveArtifact {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub version: String,
    pub report: SolveReport,
    pub map: TriMeshMap,
    pub inverse: TriMeshMap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HopfArtifact {
    pub config_hash: String,
    pub seed: u64,
    pub l1_norm: f64,
    pub dbar_l1: f64,
    pub residuals: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentBundle {
    pub config_hash: String,
    pub report: SolveReport,
    pub files: Vec<PathBuf>,
}

fn write_file(
    files: &mut Vec<PathBuf>,
    path: PathBuf,
    bytes: &[u8],
) -> Result<(), ExperimentError> {
    std::fs::write(&path, bytes)?;
    files.push(path);
    Ok(())
}

fn write_json<T: Serialize>(
    files: &mut Vec<PathBuf>,
    path: PathBuf,
    value: &T,
) -> Result<(), ExperimentError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(files, path, &bytes)
}

/// Solve, pseudo-invert, run the requested analyses, and persist the
/// bundle under `out_dir`. Rerunning the same config yields byte-identical
/// outputs; partial outputs are removed if any stage fails.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<ExperimentBundle, ExperimentError> {
    let mut files = Vec::new();
    match run_experiment_inner(config, out_dir, &mut files) {
        Ok(bundle) => Ok(bundle),
        Err(e) => {
            for f in files {
                let _ = std::fs::remove_file(f);
            }
            Err(e)
        }
    }
}

fn run_experiment_inner(
    config: &ExperimentConfig,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<ExperimentBundle, ExperimentError> {
    std::fs::create_dir_all(out_dir)?;
    let hash = config.hash();
    let gauge = parse_gauge(&config.gauge)?;
    let weight = parse_weight(&config.weight)?;
    let boundary_spec = parse_boundary(&config.boundary)?;
    let mesh = Arc::new(build_disk_mesh(config.n_boundary, config.refinement)?);
    let boundary = boundary_spec.sample(&mesh);

    let (map, report) = minimize_energy(
        &mesh,
        &boundary,
        &gauge,
        &weight,
        config.side,
        &config.solver,
    )?;
    if report.termination == Termination::MaxIterations {
        return Err(ExperimentError::NonConvergence(report.gradient_norm));
    }
    let (inverse, _) = pseudo_inverse(&map)?;

    let artifact = SolveArtifact {
        config: config.clone(),
        config_hash: hash.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        report: report.clone(),
        map: map.clone(),
        inverse: inverse.clone(),
    };
    write_json(files, out_dir.join("result.json"), &artifact)?;

    if config.analyses.hopf {
        // the Hopf differential lives on the h side: the solution itself
        // for h-side runs, the pseudo-inverse otherwise
        let h = match config.side {
            EnergySide::HSide => &map,
            EnergySide::FSide => &inverse,
        };
        let field = hopf_field(h, &gauge, &weight)?;
        let battery = TestFunction::battery();
        let residuals =
            inner_variation_residual(h, &gauge, &weight, &battery, VariationSide::HSideP)?;
        let (lhs, rhs) =
            crate::hopf::reich_strebel_check(&field, &TriMeshMap::identity(mesh.clone()))?;
        write_json(
            files,
            out_dir.join("hopf.json"),
            &HopfArtifact {
                config_hash: hash.clone(),
                seed: config.seed,
                l1_norm: field.l1_norm,
                dbar_l1: field.dbar_l1,
                residuals,
                lhs,
                rhs,
            },
        )?;
        let mut csv = String::from("triangle,re,im,abs\n");
        for (t, phi) in field.phi.iter().enumerate() {
            csv.push_str(&format!("{t},{},{},{}\n", phi.re, phi.im, phi.norm()));
        }
        write_file(files, out_dir.join("phi_abs.csv"), csv.as_bytes())?;
    }

    if config.analyses.lobes {
        let pair = BoundaryPair::from_fns(4096, |t| boundary_spec.angle(t), |t| t)?;
        let decomp = decompose_lobes(&pair, 1e-9)?;
        let total = total_varg(&decomp);
        #[derive(Serialize)]
        struct LobeArtifact<'a> {
            config_hash: &'a str,
            seed: u64,
            total_varg: f64,
            x_measure: f64,
            decomposition: &'a LobeDecomposition,
        }
        write_json(
            files,
            out_dir.join("lobes.json"),
            &LobeArtifact {
                config_hash: &hash,
                seed: config.seed,
                total_varg: total,
                x_measure: decomp.x_measure,
                decomposition: &decomp,
            },
        )?;
        let mut csv = String::from("lobe,re,im\n");
        for (i, lobe) in decomp.lobes.iter().enumerate() {
            for z in &lobe.curve {
                csv.push_str(&format!("{i},{},{}\n", z.re, z.im));
            }
        }
        write_file(files, out_dir.join("lobe_curves.csv"), csv.as_bytes())?;
    }

    if config.analyses.hairs {
        let probes: Vec<f64> = (1..=8).map(|n| 1.0 - 0.5_f64.powi(n)).collect();
        let hair_report = detect_hairs(&map, None)?;
        let tips = tip_measure(&hair_report, &map, &probes)?;
        #[derive(Serialize)]
        struct HairArtifact<'a> {
            config_hash: &'a str,
            seed: u64,
            report: &'a HairReport,
            tips: &'a TipMeasure,
        }
        write_json(
            files,
            out_dir.join("hairs.json"),
            &HairArtifact {
                config_hash: &hash,
                seed: config.seed,
                report: &hair_report,
                tips: &tips,
            },
        )?;
    }

    if config.analyses.fuchsian {
        let domain = FundamentalDomain::octagon(1)?;
        let group = FuchsianGroup::octagon();
        let transfer = transfer_identity_check(|_| 1.0, gauge.p(), &domain, &group, 3);
        #[derive(Serialize)]
        struct FuchsianArtifact<'a> {
            config_hash: &'a str,
            seed: u64,
            hyperbolic_area: f64,
            transfer: crate::fuchsian::TransferReport,
        }
        write_json(
            files,
            out_dir.join("fuchsian.json"),
            &FuchsianArtifact {
                config_hash: &hash,
                seed: config.seed,
                hyperbolic_area: domain.hyperbolic_area(),
                transfer,
            },
        )?;
    }

    let mut summary = String::from(
        "config_hash,seed,boundary,gauge,weight,side,refinement,energy,gradient_norm,iterations,min_jacobian,roundtrip_error,converged\n",
    );
    summary.push_str(&format!(
        "{hash},{},{},{},{},{:?},{},{},{},{},{},{},{}\n",
        config.seed,
        config.boundary,
        config.gauge,
        config.weight,
        config.side,
        config.refinement,
        report.final_energy,
        report.gradient_norm,
        report.iterations,
        report.min_jacobian,
        report.roundtrip_error,
        report.termination == Termination::Converged,
    ));
    write_file(files, out_dir.join("summary.csv"), summary.as_bytes())?;

    Ok(ExperimentBundle {
        config_hash: hash,
        report,
        files: files.clone(),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StudyRow {
    pub refinement: u32,
    pub h: f64,
    pub energy: f64,
    pub dbar_l1: f64,
    pub oracle_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderFit {
    Slope(f64),
    Saturated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    pub dbar_order: OrderFit,
    pub oracle_order: OrderFit,
}

/// Least-squares slope of log(err) against log(h); `Saturated` when the
/// errors sit at machine scale.
pub fn fit_order(hs: &[f64], errs: &[f64]) -> OrderFit {
    if errs.iter().any(|&e| e < 1e-13) {
        return OrderFit::Saturated;
    }
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    OrderFit::Slope(num / den)
}

/// Refinement study: solve the configured problem at each level and track
/// mesh size, energy, the Hopf dbar residual, and the L-infinity distance
/// of the pseudo-inverse from the Poisson-quadrature oracle.
pub fn convergence_study(
    config: &ExperimentConfig,
    refinements: &[u32],
) -> Result<StudyTable, ExperimentError> {
    if refinements.len() < 3 {
        return Err(ExperimentError::Config(
            "convergence study needs at least 3 refinement levels".into(),
        ));
    }
    let gauge = parse_gauge(&config.gauge)?;
    let weight = parse_weight(&config.weight)?;
    let boundary_spec = parse_boundary(&config.boundary)?;
    let mut rows = Vec::new();
    for &r in refinements {
        let mesh = Arc::new(build_disk_mesh(config.n_boundary, r)?);
        let boundary = boundary_spec.sample(&mesh);
        let (map, report) = minimize_energy(
            &mesh,
            &boundary,
            &gauge,
            &weight,
            config.side,
            &config.solver,
        )?;
        let h_map = match config.side {
            EnergySide::HSide => map.clone(),
            EnergySide::FSide => pseudo_inverse(&map)?.0,
        };
        let field = hopf_field(&h_map, &gauge, &weight)?;
        let oracle = poisson_extension(&mesh, |t| boundary_spec.inverse_angle(t), 4096);
        let oracle_error = (0..mesh.n_vertices())
            .map(|v| (h_map.image_positions[v] - oracle.image_positions[v]).norm())
            .fold(0.0, f64::max);
        rows.push(StudyRow {
            refinement: r,
            h: mesh.max_diameter(),
            energy: report.final_energy,
            dbar_l1: field.dbar_l1,
            oracle_error,
        });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let dbar: Vec<f64> = rows.iter().map(|r| r.dbar_l1).collect();
    let oracle: Vec<f64> = rows.iter().map(|r| r.oracle_error).collect();
    Ok(StudyTable {
        dbar_order: fit_order(&hs, &dbar),
        oracle_order: fit_order(&hs, &oracle),
        rows,
    })
}

pub fn study_csv(table: &StudyTable) -> String {
    let mut csv = String::from("refinement,h,energy,dbar_l1,oracle_error\n");
    for r in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.refinement, r.h, r.energy, r.dbar_l1, r.oracle_error
        ));
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsers() {
        assert!(matches!(
            parse_gauge("power:p=2").unwrap(),
            DistortionGauge::Power { p } if p == 2.0
        ));
        assert!(parse_gauge("nope:p=2").is_err());
        assert!(parse_gauge("power:q=2").is_err());
        assert!(matches!(
            parse_boundary("sin:a=0.3").unwrap(),
            BoundarySpec::Sin { a } if a == 0.3
        ));
        assert!(matches!(
            parse_boundary("id").unwrap(),
            BoundarySpec::Identity
        ));
        assert!(parse_weight("const").is_ok());
        assert!(parse_weight("banana").is_err());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.refinement = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn identity_experiment_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            boundary: "id".into(),
            refinement: 2,
            analyses: AnalysisToggles {
                hopf: true,
                lobes: true,
                hairs: true,
                fuchsian: false,
            },
            ..Default::default()
        };
        let bundle = run_experiment(&config, dir.path()).unwrap();
        assert!((bundle.report.final_energy - std::f64::consts::PI).abs() < 0.02);

        let hopf: HopfArtifact = serde_json::from_slice(
            &std::fs::read(dir.path().join("hopf.json")).unwrap(),
        )
        .unwrap();
        assert!(hopf.l1_norm < 1e-8, "identity map has trivial Hopf field");

        let summary1 = std::fs::read(dir.path().join("summary.csv")).unwrap();
        let result1 = std::fs::read(dir.path().join("result.json")).unwrap();
        // rerun: byte-identical artifacts
        let dir2 = tempfile::tempdir().unwrap();
        run_experiment(&config, dir2.path()).unwrap();
        assert_eq!(summary1, std::fs::read(dir2.path().join("summary.csv")).unwrap());
        assert_eq!(result1, std::fs::read(dir2.path().join("result.json")).unwrap());
    }

    #[test]
    fn failure_removes_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            boundary: "id".into(),
            refinement: 2,
            solver: SolveOptions {
                max_iter: 0,
                ..Default::default()
            },
            ..Default::default()
        };
        // identity converges instantly even with max_iter 0, so force a
        // config failure instead
        let bad = ExperimentConfig {
            gauge: "bogus:p=1".into(),
            ..config
        };
        assert!(run_experiment(&bad, dir.path()).is_err());
        assert!(!dir.path().join("result.json").exists());
        assert!(!dir.path().join("summary.csv").exists());
    }

    #[test]
    fn result_artifact_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            boundary: "sin:a=0.2".into(),
            refinement: 2,
            analyses: AnalysisToggles::default(),
            ..Default::default()
        };
        run_experiment(&config, dir.path()).unwrap();
        let artifact: SolveArtifact = serde_json::from_slice(
            &std::fs::read(dir.path().join("result.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(artifact.config_hash, config.hash());
        assert_eq!(artifact.map.mesh.n_triangles(), artifact.inverse.mesh.n_triangles());
    }

    #[test]
    fn study_needs_three_levels() {
        let config = ExperimentConfig::default();
        assert!(convergence_study(&config, &[2, 3]).is_err());
    }

    #[test]
    fn p1_study_has_first_order_oracle_error() {
        let config = ExperimentConfig {
            gauge: "power:p=1".into(),
            boundary: "sin:a=0.3".into(),
            side: EnergySide::FSide,
            ..Default::default()
        };
        let table = convergence_study(&config, &[1, 2, 3]).unwrap();
        match table.oracle_order {
            OrderFit::Slope(s) => assert!(s > 0.5, "oracle slope {s}"),
            OrderFit::Saturated => panic!("unexpected saturation"),
        }
        let csv = study_csv(&table);
        assert_eq!(csv.lines().count(), 4);
    }
}
