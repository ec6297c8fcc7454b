//! Shared fixture for the benchmarks: the strong-pump Mathieu oscillator
//! sampled and identified the way the CLI does it.

use htf_core::feedback::{Band, SweepOptions};
use htf_core::htf::{assemble_htf, build_central_column, truncation_order};
use htf_core::oracle::{analytic_htf_sample, default_truncation, mathieu_system};
use htf_core::{
    FitConfig, FrequencyGrid, HarmonicStateSpace, HarmonicTransferFunction, MathieuSpec, PltvSystem,
    SidebandResponseSet,
};

pub const NH: usize = 8;

pub struct Fixture {
    pub system: PltvSystem,
    pub data: SidebandResponseSet,
    pub htf: HarmonicTransferFunction,
    pub options: SweepOptions,
}

impl Fixture {
    pub fn mathieu() -> Self {
        let system = mathieu_system(&MathieuSpec::default()).expect("default Mathieu system");
        let grid = FrequencyGrid::linear(1e8, 1.6e9, 101, system.f0_hz(), NH).expect("grid");
        let hss = HarmonicStateSpace::assemble(&system, default_truncation(NH)).expect("operator");
        let data = analytic_htf_sample(&hss, &grid).expect("samples");
        let n = truncation_order(&data, 1.0).expect("truncation").chosen_n;
        let column = build_central_column(&data, n, &FitConfig::default()).expect("fit");
        let htf = assemble_htf(column).expect("assembly");
        let options = SweepOptions::new(Band::new(1e8, 6e8).expect("band"));
        Self {
            system,
            data,
            htf,
            options,
        }
    }

    /// `count` values spread over the stabilizing range of the series
    /// damping resistor.
    pub fn values(count: usize) -> Vec<f64> {
        (1..=count).map(|i| 0.19 * i as f64 / count as f64).collect()
    }
}
