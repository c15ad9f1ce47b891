//! Numerical laboratory for extremal mappings of finite distortion on the
//! unit disk: weighted mean-distortion energies, their minimizers, and the
//! certificates (Ahlfors-Hopf holomorphy, lobe geometry, Reich-Strebel
//! inequalities, Fuchsian energy transfer) that accompany them.

pub mod experiment;
pub mod fuchsian;
pub mod gauge;
pub mod hairs;
pub mod hopf;
pub mod lobes;
pub mod mesh;
pub mod solver;

pub use fuchsian::{
    automorphic_phi_l1_growth, automorphy_error, transfer_identity_check, FuchsianGroup,
    FundamentalDomain, MobiusTransform, PoincareWeight, TransferReport,
};
pub use gauge::{
    beltrami, classify_gauge, distortion, energy_f, energy_h, DistortionGauge, EnergyReport,
    EnergySide, WeightField,
};
pub use hairs::{detect_hairs, synthetic_collapse, tip_measure, Hair, HairReport, TipMeasure};
pub use hopf::{
    hopf_field, inner_variation_residual, reich_strebel_check, HopfField, TestFunction,
    VariationSide,
};
pub use lobes::{
    decompose_lobes, total_varg, winding_number, BoundaryPair, Lobe, LobeDecomposition, TrigMap,
};
pub use mesh::{build_disk_mesh, dbar_residual, wirtinger, TriMesh, TriMeshMap};
pub use solver::{
    harmonic_extension, minimize_energy, poisson_extension, pseudo_inverse, BoundaryData,
    BoundarySpec, SolveOptions, SolveReport,
};
