//! First derivatives of the received signal with respect to the unknowns.
//!
//! Columns are grouped by [`ParamBlock`] in the order the caller supplies.
//! Position and orientation blocks are three columns each (x, y, z or
//! alpha, psi, phi); each gain part is one column.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{direction_info, rotation_derivatives};
use crate::signal::{far_terms, pair_terms, Regime, Scenario};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// A group of scalar unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ParamBlock {
    /// Destination centroid position.
    #[serde(rename = "p_U")]
    PosU,
    /// Source centroid position.
    #[serde(rename = "p_B")]
    PosB,
    /// Destination orientation angles.
    #[serde(rename = "Phi_U")]
    OriU,
    /// Source orientation angles.
    #[serde(rename = "Phi_B")]
    OriB,
    /// Real part of the path gain.
    #[serde(rename = "beta_R")]
    GainR,
    /// Imaginary part of the path gain.
    #[serde(rename = "beta_I")]
    GainI,
}

impl ParamBlock {
    pub const ALL: [ParamBlock; 6] = [
        ParamBlock::PosU,
        ParamBlock::PosB,
        ParamBlock::OriU,
        ParamBlock::OriB,
        ParamBlock::GainR,
        ParamBlock::GainI,
    ];

    pub fn dimension(self) -> usize {
        match self {
            ParamBlock::GainR | ParamBlock::GainI => 1,
            _ => 3,
        }
    }

    pub fn is_gain(self) -> bool {
        matches!(self, ParamBlock::GainR | ParamBlock::GainI)
    }

    pub fn is_position(self) -> bool {
        matches!(self, ParamBlock::PosU | ParamBlock::PosB)
    }

    pub fn is_orientation(self) -> bool {
        matches!(self, ParamBlock::OriU | ParamBlock::OriB)
    }

    pub fn label(self) -> &'static str {
        match self {
            ParamBlock::PosU => "p_U",
            ParamBlock::PosB => "p_B",
            ParamBlock::OriU => "Phi_U",
            ParamBlock::OriB => "Phi_B",
            ParamBlock::GainR => "beta_R",
            ParamBlock::GainI => "beta_I",
        }
    }
}

/// Column ranges of each block inside a parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    entries: Vec<(ParamBlock, Range<usize>)>,
}

impl BlockLayout {
    pub fn new(blocks: &[ParamBlock]) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("no parameter blocks given"));
        }
        let mut entries = Vec::with_capacity(blocks.len());
        let mut start = 0;
        for (i, &b) in blocks.iter().enumerate() {
            if blocks[..i].contains(&b) {
                return Err(Error::invalid(format!("block {b:?} listed twice")));
            }
            entries.push((b, start..start + b.dimension()));
            start += b.dimension();
        }
        Ok(Self { entries })
    }

    pub fn total_dim(&self) -> usize {
        self.entries.last().map_or(0, |(_, r)| r.end)
    }

    pub fn blocks(&self) -> Vec<ParamBlock> {
        self.entries.iter().map(|(b, _)| *b).collect()
    }

    pub fn range(&self, block: ParamBlock) -> Option<Range<usize>> {
        self.entries
            .iter()
            .find(|(b, _)| *b == block)
            .map(|(_, r)| r.clone())
    }

    pub fn iter(&self) -> impl Iterator<Item = &(ParamBlock, Range<usize>)> {
        self.entries.iter()
    }
}

/// Per-transmission Jacobians `∂μ_t/∂η`, each `N_U x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianStack {
    pub layout: BlockLayout,
    pub matrices: Vec<DMatrix<Complex64>>,
}

/// Jacobian of [`crate::signal::nearfield_mu`].
pub fn nearfield_jacobian(
    scenario: &Scenario,
    blocks: &[ParamBlock],
    t: usize,
) -> Result<DMatrix<Complex64>> {
    let layout = BlockLayout::new(blocks)?;
    let v = scenario.plan.precoded(t)?;
    let pairs = pair_terms(scenario)?;
    let k = scenario.channel.wavenumber();
    let beta = scenario.channel.gain;
    let n_u = scenario.num_rx();
    let n_b = pairs.n_b;

    let dq_b = rotation_derivatives(&scenario.source.pose.angles)?;
    let dq_u = rotation_derivatives(&scenario.destination.pose.angles)?;
    let local_b = scenario.source.array.local_coords();
    let local_u = scenario.destination.array.local_coords();
    // ∂s_b/∂Φ_B and ∂s_u/∂Φ_U, one 3xN matrix per angle.
    let ds_b: Vec<_> = dq_b.iter().map(|d| d * local_b).collect();
    let ds_u: Vec<_> = dq_u.iter().map(|d| d * local_u).collect();

    let mut jac = DMatrix::zeros(n_u, layout.total_dim());
    for u in 0..n_u {
        // Accumulate Σ_b (∂d_bu) v_b e^{-jk d_bu} per scalar parameter.
        let mut signal = Complex64::new(0.0, 0.0);
        let mut d_pos = Vector3::<Complex64>::zeros();
        let mut d_ori_u = Vector3::<Complex64>::zeros();
        let mut d_ori_b = Vector3::<Complex64>::zeros();
        for b in 0..n_b {
            let idx = u * n_b + b;
            let r = pairs.diff[idx];
            let d = pairs.dist[idx];
            let term = v[b] * Complex64::from_polar(1.0, -k * d);
            signal += term;
            let grad = r / d;
            for i in 0..3 {
                d_pos[i] += term * grad[i];
                d_ori_u[i] += term * grad.dot(&ds_u[i].column(u));
                d_ori_b[i] -= term * grad.dot(&ds_b[i].column(b));
            }
        }
        let scale = -J * k * beta;
        for (block, range) in layout.iter() {
            let s = range.start;
            match block {
                ParamBlock::PosU => {
                    for i in 0..3 {
                        jac[(u, s + i)] = scale * d_pos[i];
                    }
                }
                ParamBlock::PosB => {
                    for i in 0..3 {
                        jac[(u, s + i)] = -scale * d_pos[i];
                    }
                }
                ParamBlock::OriU => {
                    for i in 0..3 {
                        jac[(u, s + i)] = scale * d_ori_u[i];
                    }
                }
                ParamBlock::OriB => {
                    for i in 0..3 {
                        jac[(u, s + i)] = scale * d_ori_b[i];
                    }
                }
                ParamBlock::GainR => jac[(u, s)] = signal,
                ParamBlock::GainI => jac[(u, s)] = J * signal,
            }
        }
    }
    Ok(jac)
}

/// Jacobian of [`crate::signal::farfield_mu`].
///
/// The centroid direction `Δ` responds to a move of the destination through
/// `(I - ΔΔᵀ)/d_BU`, and to a move of the source through its negation.
pub fn farfield_jacobian(
    scenario: &Scenario,
    blocks: &[ParamBlock],
    t: usize,
) -> Result<DMatrix<Complex64>> {
    let layout = BlockLayout::new(blocks)?;
    let v = scenario.plan.precoded(t)?;
    let ft = far_terms(scenario)?;
    let k = scenario.channel.wavenumber();
    let beta = scenario.channel.gain;
    let n_u = scenario.num_rx();
    let n_b = v.len();
    let delta = ft.direction;
    let dir_jac: Matrix3<f64> = (Matrix3::identity() - delta * delta.transpose()) / ft.distance;

    let dq_b = rotation_derivatives(&scenario.source.pose.angles)?;
    let dq_u = rotation_derivatives(&scenario.destination.pose.angles)?;
    let ds_b: Vec<_> = dq_b
        .iter()
        .map(|d| d * scenario.source.array.local_coords())
        .collect();
    let ds_u: Vec<_> = dq_u
        .iter()
        .map(|d| d * scenario.destination.array.local_coords())
        .collect();

    // Transmit-side sums: g = a_BUᴴ v, its direction gradient and its
    // source-orientation gradient.
    let mut g = Complex64::new(0.0, 0.0);
    let mut g_dir = Vector3::<Complex64>::zeros();
    let mut g_ori = Vector3::<Complex64>::zeros();
    for b in 0..n_b {
        let w = ft.a_tx_conj[b] * v[b];
        g += w;
        let sens = dir_jac * ft.s_b.column(b);
        for i in 0..3 {
            g_dir[i] += J * k * sens[i] * w;
            g_ori[i] += J * k * delta.dot(&ds_b[i].column(b)) * w;
        }
    }

    let mut jac = DMatrix::zeros(n_u, layout.total_dim());
    for u in 0..n_u {
        let common = ft.bulk * ft.a_rx[u];
        let rx_sens = delta + dir_jac * ft.s_u.column(u);
        // ∂μ_u/∂p_U
        let pos_u: Vector3<Complex64> =
            Vector3::from_fn(|i, _| beta * common * (-J * k * rx_sens[i] * g + g_dir[i]));
        for (block, range) in layout.iter() {
            let s = range.start;
            match block {
                ParamBlock::PosU => {
                    for i in 0..3 {
                        jac[(u, s + i)] = pos_u[i];
                    }
                }
                ParamBlock::PosB => {
                    for i in 0..3 {
                        jac[(u, s + i)] = -pos_u[i];
                    }
                }
                ParamBlock::OriU => {
                    for i in 0..3 {
                        let p = -J * k * delta.dot(&ds_u[i].column(u));
                        jac[(u, s + i)] = beta * common * p * g;
                    }
                }
                ParamBlock::OriB => {
                    for i in 0..3 {
                        jac[(u, s + i)] = beta * common * g_ori[i];
                    }
                }
                ParamBlock::GainR => jac[(u, s)] = common * g,
                ParamBlock::GainI => jac[(u, s)] = J * common * g,
            }
        }
    }
    Ok(jac)
}

/// Analytic Jacobian under the scenario's configured regime.
pub fn jacobian(
    scenario: &Scenario,
    blocks: &[ParamBlock],
    t: usize,
) -> Result<DMatrix<Complex64>> {
    match scenario.regime {
        Regime::NearField => nearfield_jacobian(scenario, blocks, t),
        Regime::FarField => farfield_jacobian(scenario, blocks, t),
    }
}

/// Jacobians for every transmission of the plan.
pub fn jacobian_stack(scenario: &Scenario, blocks: &[ParamBlock]) -> Result<JacobianStack> {
    let layout = BlockLayout::new(blocks)?;
    let matrices = (0..scenario.num_transmissions())
        .map(|t| jacobian(scenario, blocks, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(JacobianStack { layout, matrices })
}

/// Central-difference step per kind of unknown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSizes {
    /// Meters.
    pub position: f64,
    /// Radians, destination orientation.
    pub angle_u: f64,
    /// Radians, source orientation.
    pub angle_b: f64,
    pub gain: f64,
}

/// Largest angle step [`StepSizes::for_scenario`] will pick.
pub const MAX_ANGLE_STEP: f64 = 1e-4;

impl StepSizes {
    /// Same step for every block.
    pub fn uniform(h: f64) -> Self {
        Self {
            position: h,
            angle_u: h,
            angle_b: h,
            gain: h,
        }
    }

    /// `1e-7·max(1, d_BU)` m for positions and `1e-7` for gains. An angle
    /// step moves the elements of a node with array radius `r` by `h·r`, so
    /// each orientation uses `position / r` rad, capped at
    /// [`MAX_ANGLE_STEP`]; point arrays fall back to `1e-7` rad.
    pub fn for_scenario(scenario: &Scenario) -> Result<Self> {
        let d = direction_info(
            &scenario.source.pose.position,
            &scenario.destination.pose.position,
        )?
        .distance;
        let position = 1e-7 * d.max(1.0);
        let angle = |array: &crate::geometry::ArrayGeometry| {
            let r = array
                .local_coords()
                .column_iter()
                .map(|c| c.norm())
                .fold(0.0, f64::max);
            if r > 0.0 {
                (position / r).min(MAX_ANGLE_STEP)
            } else {
                1e-7
            }
        };
        Ok(Self {
            position,
            angle_u: angle(&scenario.destination.array),
            angle_b: angle(&scenario.source.array),
            gain: 1e-7,
        })
    }

    pub fn for_block(&self, block: ParamBlock) -> f64 {
        match block {
            ParamBlock::PosU | ParamBlock::PosB => self.position,
            ParamBlock::OriU => self.angle_u,
            ParamBlock::OriB => self.angle_b,
            ParamBlock::GainR | ParamBlock::GainI => self.gain,
        }
    }
}

/// Current value of one scalar unknown.
pub fn parameter_value(scenario: &Scenario, block: ParamBlock, component: usize) -> f64 {
    match block {
        ParamBlock::PosU => scenario.destination.pose.position[component],
        ParamBlock::PosB => scenario.source.pose.position[component],
        ParamBlock::OriU => scenario.destination.pose.angles.to_array()[component],
        ParamBlock::OriB => scenario.source.pose.angles.to_array()[component],
        ParamBlock::GainR => scenario.channel.gain.re,
        ParamBlock::GainI => scenario.channel.gain.im,
    }
}

/// Copy of `scenario` with one scalar unknown set to `value`.
pub fn with_parameter(
    scenario: &Scenario,
    block: ParamBlock,
    component: usize,
    value: f64,
) -> Scenario {
    let mut s = scenario.clone();
    match block {
        ParamBlock::PosU => s.destination.pose.position[component] = value,
        ParamBlock::PosB => s.source.pose.position[component] = value,
        ParamBlock::OriU => set_angle(&mut s.destination.pose.angles, component, value),
        ParamBlock::OriB => set_angle(&mut s.source.pose.angles, component, value),
        ParamBlock::GainR => s.channel.gain.re = value,
        ParamBlock::GainI => s.channel.gain.im = value,
    }
    s
}

fn set_angle(angles: &mut crate::geometry::EulerAngles, component: usize, value: f64) {
    match component {
        0 => angles.alpha = value,
        1 => angles.psi = value,
        _ => angles.phi = value,
    }
}

/// Central-difference Jacobian of an arbitrary signal evaluator.
///
/// Each scalar unknown is moved to `θ ± h` and the scenario rebuilt, so
/// angle perturbations flow through the rotation matrices and position
/// perturbations through the element coordinates. The divisor is the step
/// that was actually representable, `(θ+h) - (θ-h)`.
pub fn finite_difference_jacobian<F>(
    mu: F,
    scenario: &Scenario,
    blocks: &[ParamBlock],
    t: usize,
    steps: &StepSizes,
) -> Result<DMatrix<Complex64>>
where
    F: Fn(&Scenario, usize) -> Result<DVector<Complex64>>,
{
    let layout = BlockLayout::new(blocks)?;
    let mut jac = DMatrix::zeros(scenario.num_rx(), layout.total_dim());
    for (block, range) in layout.iter() {
        let h = steps.for_block(*block);
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!(
                "step for {block:?} must be > 0, got {h}"
            )));
        }
        for (component, col) in range.clone().enumerate() {
            let x = parameter_value(scenario, *block, component);
            let (hi, lo) = (x + h, x - h);
            let span = hi - lo;
            if hi == x || lo == x || span <= 0.0 {
                return Err(Error::invalid(format!(
                    "step {h:e} vanishes against {block:?}[{component}] = {x}"
                )));
            }
            let plus = mu(&with_parameter(scenario, *block, component, hi), t)?;
            let minus = mu(&with_parameter(scenario, *block, component, lo), t)?;
            jac.set_column(col, &((plus - minus) / Complex64::new(span, 0.0)));
        }
    }
    Ok(jac)
}
