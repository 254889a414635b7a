//! Scenario runs, the identifiability table, the zero-information check, the
//! array-size sweep and derivative verification.

mod config;

use std::fmt::{self, Write as _};

use nalgebra::DMatrix;
use serde::Serialize;

pub use config::{CaseId, PlanKind, RunConfig, ALLOWED_STREAMS};

use crate::derivs::{finite_difference_jacobian, jacobian, jacobian_stack, ParamBlock, StepSizes};
use crate::error::{Error, Result};
use crate::fisher::{
    assemble_fim, block_rank, efim, identifiability, oeb, peb, Bound, Efim, Fim, IdentReport,
    DEFAULT_REL_THRESHOLD,
};
use crate::geometry::{direction_info, fraunhofer_distance};
use crate::signal::{mu, Regime, Scenario};

/// Both propagation models, in output order.
pub const REGIMES: [Regime; 2] = [Regime::NearField, Regime::FarField];

/// Bound on `‖EFIM(Φ_B)‖_F / ‖J_{Φ_B Φ_B}‖_F` for the zero-information check.
pub const APPENDIX_TOL: f64 = 1e-8;

/// Worst relative Jacobian error accepted by [`verify_derivatives`].
pub const DERIVATIVE_TOL: f64 = 1e-6;

/// FIM, EFIM and the diagnostics derived from them.
#[derive(Debug, Clone)]
pub struct FisherReport {
    pub regime: Regime,
    pub interest: Vec<ParamBlock>,
    pub fim: Fim,
    pub efim: Efim,
    pub ident: IdentReport,
    /// Rank of each interest block once the others are also unknown.
    pub block_ranks: Vec<(ParamBlock, usize)>,
    pub peb: Option<Bound>,
    pub oeb: Option<Bound>,
}

impl FisherReport {
    pub fn block_rank(&self, block: ParamBlock) -> Option<usize> {
        self.block_ranks
            .iter()
            .find(|(b, _)| *b == block)
            .map(|(_, r)| *r)
    }
}

/// Information about `interest` with the path gain as nuisance.
pub fn analyze(scenario: &Scenario, interest: &[ParamBlock]) -> Result<FisherReport> {
    if interest.iter().any(|b| b.is_gain()) {
        return Err(Error::invalid("gain blocks are always nuisance"));
    }
    let mut unknown = interest.to_vec();
    unknown.extend([ParamBlock::GainR, ParamBlock::GainI]);
    let fim = assemble_fim(
        &jacobian_stack(scenario, &unknown)?,
        scenario.channel.snr_linear,
    )?;
    let efim = efim(&fim, interest)?;
    let ident = identifiability(&efim, DEFAULT_REL_THRESHOLD);
    let mut block_ranks = Vec::new();
    let (mut pos, mut ori) = (None, None);
    for (block, range) in efim.layout.iter() {
        block_ranks.push((
            *block,
            block_rank(&efim, range.clone(), DEFAULT_REL_THRESHOLD)?,
        ));
        if block.is_position() && pos.is_none() {
            pos = Some(peb(&efim, range.clone())?);
        }
        if block.is_orientation() && ori.is_none() {
            ori = Some(oeb(&efim, range.clone())?);
        }
    }
    Ok(FisherReport {
        regime: scenario.regime,
        interest: interest.to_vec(),
        fim,
        efim,
        ident,
        block_ranks,
        peb: pos,
        oeb: ori,
    })
}

/// The configured case, regime and plan.
pub fn run_case(config: &RunConfig) -> Result<FisherReport> {
    analyze(&config.scenario()?, &config.case.interest_blocks())
}

/// Estimability of one parameter in a table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Known, not estimated.
    NotApplicable,
    /// Estimable in this many dimensions (1 to 3).
    Dims(usize),
    /// Not estimable in any direction.
    Unidentifiable,
}

impl Verdict {
    pub fn from_rank(rank: usize) -> Self {
        if rank == 0 {
            Verdict::Unidentifiable
        } else {
            Verdict::Dims(rank)
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::NotApplicable => f.write_str("N/A"),
            Verdict::Dims(d) => write!(f, "{d}D"),
            Verdict::Unidentifiable => f.write_str("none"),
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Column order of the verdicts in a [`TableRow`].
pub const TABLE_COLUMNS: [ParamBlock; 4] = [
    ParamBlock::PosU,
    ParamBlock::OriU,
    ParamBlock::PosB,
    ParamBlock::OriB,
];

/// The seven unknown-parameter combinations, in table order.
pub fn table_rows() -> [(&'static str, Vec<ParamBlock>); 7] {
    use ParamBlock::*;
    [
        ("Source position and source orientation", vec![PosB, OriB]),
        (
            "Source position and destination orientation",
            vec![PosB, OriU],
        ),
        (
            "Destination position and source orientation",
            vec![PosU, OriB],
        ),
        ("Source position", vec![PosB]),
        ("Source orientation", vec![OriB]),
        ("Destination position", vec![PosU]),
        ("Destination orientation", vec![OriU]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub index: usize,
    pub label: String,
    pub regime: Regime,
    pub plan: PlanKind,
    /// One verdict per entry of [`TABLE_COLUMNS`].
    pub verdicts: [Verdict; 4],
    pub efim_rank: usize,
}

impl TableRow {
    pub fn verdict(&self, block: ParamBlock) -> Verdict {
        let i = TABLE_COLUMNS
            .iter()
            .position(|b| *b == block)
            .expect("pose block");
        self.verdicts[i]
    }
}

fn table_for(config: &RunConfig, plan: PlanKind) -> Result<Vec<TableRow>> {
    let mut out = Vec::new();
    for regime in REGIMES {
        let scenario = config.scenario_with(config.dest_antennas, plan, regime)?;
        for (index, (label, blocks)) in table_rows().into_iter().enumerate() {
            let report = analyze(&scenario, &blocks)?;
            let verdicts = TABLE_COLUMNS.map(|col| match report.block_rank(col) {
                Some(r) => Verdict::from_rank(r),
                None => Verdict::NotApplicable,
            });
            out.push(TableRow {
                index: index + 1,
                label: label.to_string(),
                regime,
                plan,
                verdicts,
                efim_rank: report.ident.rank,
            });
        }
    }
    Ok(out)
}

/// Table rows under the configured plan, plus the rows whose verdicts change
/// under the other plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableReport {
    pub config_hash: String,
    pub rows: Vec<TableRow>,
    pub alternate_plan_differences: Vec<TableRow>,
}

/// All seven rows under both regimes, near-field first.
pub fn build_table(config: &RunConfig) -> Result<TableReport> {
    let rows = table_for(config, config.plan)?;
    let alternate = table_for(config, config.plan.alternate())?;
    let alternate_plan_differences = rows
        .iter()
        .zip(alternate)
        .filter(|(a, b)| a.verdicts != b.verdicts)
        .map(|(_, b)| b)
        .collect();
    Ok(TableReport {
        config_hash: config.hash(),
        rows,
        alternate_plan_differences,
    })
}

impl TableReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("row,label,regime,plan,p_U,Phi_U,p_B,Phi_B,efim_rank,config_hash\n");
        for r in self.rows.iter().chain(&self.alternate_plan_differences) {
            let v = r.verdicts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.index,
                r.label,
                r.regime.label(),
                r.plan.label(),
                v[0],
                v[1],
                v[2],
                v[3],
                r.efim_rank,
                self.config_hash
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table report serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppendixReport {
    pub regime: Regime,
    pub plan: PlanKind,
    /// The check only makes a claim for the far-field model without beamforming.
    pub applicable: bool,
    pub efim_frobenius: f64,
    pub block_frobenius: f64,
    pub efim_rank: usize,
    pub passed: bool,
}

/// Source-orientation information left after removing the path gain,
/// compared with the information the orientation block held on its own.
pub fn appendix_check(config: &RunConfig) -> Result<AppendixReport> {
    let scenario = config.scenario()?;
    let report = analyze(&scenario, &[ParamBlock::OriB])?;
    let range = report
        .fim
        .layout
        .range(ParamBlock::OriB)
        .expect("interest block");
    let block = report
        .fim
        .matrix
        .view((range.start, range.start), (3, 3))
        .norm();
    let efim_frobenius = report.efim.matrix.norm();
    Ok(AppendixReport {
        regime: config.regime,
        plan: config.plan,
        applicable: config.regime == Regime::FarField && config.plan == PlanKind::Identity,
        efim_frobenius,
        block_frobenius: block,
        efim_rank: report.ident.rank,
        passed: efim_frobenius <= APPENDIX_TOL * block,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub n_u: usize,
    pub regime: Regime,
    pub case: CaseId,
    pub peb_m: Bound,
    pub oeb_rad: Bound,
    pub efim_rank: usize,
    pub pd: bool,
    pub config_hash: String,
}

/// Bounds for every destination array size in `nu_sweep`, both regimes, for
/// the configured case. Sorted by array size, then near before far.
pub fn sweep_nu(config: &RunConfig) -> Result<Vec<SweepRecord>> {
    let hash = config.hash();
    let interest = config.case.interest_blocks();
    let mut out = Vec::new();
    for &n_u in &config.nu_sweep {
        for regime in REGIMES {
            let report = analyze(&config.scenario_with(n_u, config.plan, regime)?, &interest)?;
            out.push(SweepRecord {
                n_u,
                regime,
                case: config.case,
                peb_m: report.peb.expect("every case has a position block"),
                oeb_rad: report.oeb.expect("every case has an orientation block"),
                efim_rank: report.ident.rank,
                pd: report.ident.positive_definite,
                config_hash: hash.clone(),
            });
        }
    }
    out.sort_by_key(|r| (r.n_u, r.regime));
    Ok(out)
}

pub const SWEEP_HEADER: &str = "n_u,regime,case,peb_m,oeb_rad,efim_rank,pd,config_hash";

pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.n_u,
            r.regime.label(),
            r.case.label(),
            r.peb_m,
            r.oeb_rad,
            r.efim_rank,
            r.pd,
            r.config_hash
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeCheck {
    pub regime: Regime,
    pub block: ParamBlock,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub checks: Vec<DerivativeCheck>,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// `‖a − b‖_F / max(‖a‖_F, ‖b‖_F)`, with `0/0 = 0`.
pub fn relative_error(
    analytic: &DMatrix<num_complex::Complex64>,
    numeric: &DMatrix<num_complex::Complex64>,
) -> f64 {
    let scale = analytic.norm().max(numeric.norm());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).norm() / scale
    }
}

/// Worst relative error per block, per regime, over all transmissions.
pub fn verify_scenario(scenario: &Scenario) -> Result<DerivativeReport> {
    let mut checks = Vec::new();
    for regime in REGIMES {
        let s = scenario.with_regime(regime);
        let steps = StepSizes::for_scenario(&s)?;
        for block in ParamBlock::ALL {
            let mut worst = 0.0f64;
            for t in 0..s.num_transmissions() {
                let a = jacobian(&s, &[block], t)?;
                let n = finite_difference_jacobian(mu, &s, &[block], t, &steps)?;
                worst = worst.max(relative_error(&a, &n));
            }
            checks.push(DerivativeCheck {
                regime,
                block,
                max_rel_error: worst,
            });
        }
    }
    let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(DerivativeReport {
        checks,
        worst,
        tolerance: DERIVATIVE_TOL,
        passed: worst < DERIVATIVE_TOL,
    })
}

pub fn verify_derivatives(config: &RunConfig) -> Result<DerivativeReport> {
    verify_scenario(&config.scenario()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkInfo {
    pub wavelength_m: f64,
    pub source_aperture_m: f64,
    pub fraunhofer_distance_m: f64,
    pub distance_m: f64,
    /// Physical regime implied by the distance, independent of the model.
    pub classification: Regime,
    pub configured_regime: Regime,
    pub config_hash: String,
}

pub fn info(config: &RunConfig) -> Result<LinkInfo> {
    let scenario = config.scenario()?;
    let wavelength = scenario.channel.wavelength();
    let aperture = scenario.source.array.max_diameter();
    let distance = direction_info(
        &scenario.source.pose.position,
        &scenario.destination.pose.position,
    )?
    .distance;
    // A single-element source has no aperture and therefore no near field.
    let d_f = if aperture > 0.0 {
        fraunhofer_distance(aperture, wavelength)?
    } else {
        0.0
    };
    Ok(LinkInfo {
        wavelength_m: wavelength,
        source_aperture_m: aperture,
        fraunhofer_distance_m: d_f,
        distance_m: distance,
        classification: if distance < d_f {
            Regime::NearField
        } else {
            Regime::FarField
        },
        configured_regime: config.regime,
        config_hash: config.hash(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference(regime: Regime, plan: PlanKind) -> RunConfig {
        RunConfig {
            regime,
            plan,
            ..RunConfig::default()
        }
    }

    #[test]
    fn near_field_case_two_is_fully_identifiable() {
        let r = run_case(&reference(Regime::NearField, PlanKind::Dft)).unwrap();
        assert_eq!(r.efim.matrix.shape(), (6, 6));
        assert_eq!(r.ident.rank, 6);
        assert!(r.ident.positive_definite);
        assert!(r.peb.unwrap().is_finite() && r.oeb.unwrap().is_finite());
    }

    #[test]
    fn far_field_case_two_has_rank_four() {
        let r = run_case(&reference(Regime::FarField, PlanKind::Dft)).unwrap();
        assert_eq!(r.ident.rank, 4);
        assert_eq!(r.block_rank(ParamBlock::PosU), Some(2));
        assert_eq!(r.block_rank(ParamBlock::OriB), Some(2));
        assert_eq!(r.peb, Some(Bound::Unbounded));
        assert_eq!(r.oeb, Some(Bound::Unbounded));
    }

    #[test]
    fn near_field_without_beamforming_is_identifiable() {
        let r = run_case(&reference(Regime::NearField, PlanKind::Identity)).unwrap();
        assert!(r.ident.positive_definite);
    }

    #[test]
    fn gain_cannot_be_interest() {
        let s = RunConfig::default().scenario().unwrap();
        assert!(analyze(&s, &[ParamBlock::GainR]).is_err());
    }

    #[test]
    fn verdict_labels() {
        assert_eq!(Verdict::NotApplicable.to_string(), "N/A");
        assert_eq!(Verdict::from_rank(3).to_string(), "3D");
        assert_eq!(Verdict::from_rank(2).to_string(), "2D");
        assert_eq!(Verdict::from_rank(0).to_string(), "none");
    }

    #[test]
    fn appendix_check_on_reference_scenario() {
        let id = appendix_check(&reference(Regime::FarField, PlanKind::Identity)).unwrap();
        assert!(id.applicable && id.passed, "{id:?}");
        assert_eq!(id.efim_rank, 0);
        let dft = appendix_check(&reference(Regime::FarField, PlanKind::Dft)).unwrap();
        assert!(!dft.passed);
        assert_eq!(dft.efim_rank, 2);
        let near = appendix_check(&reference(Regime::NearField, PlanKind::Identity)).unwrap();
        assert!(!near.applicable);
        assert_eq!(near.efim_rank, 3);
    }

    #[test]
    fn sweep_is_ordered_and_scales_with_snr() {
        let mut c = RunConfig {
            nu_sweep: vec![4, 9],
            ..RunConfig::default()
        };
        let a = sweep_nu(&c).unwrap();
        let keys: Vec<_> = a.iter().map(|r| (r.n_u, r.regime)).collect();
        assert_eq!(
            keys,
            vec![
                (4, Regime::NearField),
                (4, Regime::FarField),
                (9, Regime::NearField),
                (9, Regime::FarField)
            ]
        );
        c.snr_db += 20.0 * 2f64.log10();
        let b = sweep_nu(&c).unwrap();
        for (x, y) in a.iter().zip(&b) {
            if let (Bound::Finite(p), Bound::Finite(q)) = (x.peb_m, y.peb_m) {
                assert!((q / p - 0.5).abs() < 1e-9, "{p} {q}");
            }
            if let (Bound::Finite(p), Bound::Finite(q)) = (x.oeb_rad, y.oeb_rad) {
                assert!((q / p - 0.5).abs() < 1e-9, "{p} {q}");
            }
        }
    }

    #[test]
    fn sweep_csv_format() {
        let rec = SweepRecord {
            n_u: 4,
            regime: Regime::FarField,
            case: CaseId::II,
            peb_m: Bound::Unbounded,
            oeb_rad: Bound::Finite(0.25),
            efim_rank: 4,
            pd: false,
            config_hash: "abc".into(),
        };
        assert_eq!(
            sweep_csv(&[rec]),
            format!("{SWEEP_HEADER}\n4,far,II,inf,2.5e-1,4,false,abc\n")
        );
    }

    #[test]
    fn point_arrays_verify_as_zero_over_zero() {
        let c =
            RunConfig::parse("source_antennas = 1\ndest_antennas = 1\nplan = identity").unwrap();
        let r = verify_derivatives(&c).unwrap();
        assert!(r.passed, "{r:?}");
        for chk in r.checks.iter().filter(|c| c.block.is_orientation()) {
            assert_eq!(chk.max_rel_error, 0.0);
        }
    }

    #[test]
    fn reference_link_is_near_field() {
        let i = info(&RunConfig::default()).unwrap();
        assert!((i.distance_m - (1.1f64.powi(2) * 2.0 + 1.15f64.powi(2)).sqrt()).abs() < 1e-12);
        assert_eq!(i.classification, Regime::NearField);
        assert!(i.fraunhofer_distance_m > i.distance_m);
    }
}
