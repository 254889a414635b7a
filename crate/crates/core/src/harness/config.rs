//! Flat `key = value` run configuration.
//!
//! ```text
//! # built-in scenario
//! source_position = 1.5, 1.0, 4.0
//! source_angles   = 1.1, 2.2, 0.7
//! regime = near
//! nu_sweep = 4, 9, 16
//! ```
//!
//! Blank lines and `#` comments are ignored, vectors are comma separated and
//! every key is optional. Unknown or repeated keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::derivs::ParamBlock;
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, EulerAngles, Pose};
use crate::signal::{identity_plan, ChannelParams, Node, Regime, Scenario, TransmitPlan};

/// Stream counts the DFT plan accepts.
pub const ALLOWED_STREAMS: [usize; 4] = [16, 32, 48, 64];

/// Which blocks are unknown besides the path gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CaseId {
    I,
    II,
    III,
    IV,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::I, CaseId::II, CaseId::III, CaseId::IV];

    /// Pose blocks of interest.
    pub fn interest_blocks(self) -> [ParamBlock; 2] {
        use ParamBlock::*;
        match self {
            CaseId::I => [PosU, OriU],
            CaseId::II => [PosU, OriB],
            CaseId::III => [PosB, OriU],
            CaseId::IV => [PosB, OriB],
        }
    }

    /// Interest blocks followed by the two gain nuisances.
    pub fn unknown_blocks(self) -> Vec<ParamBlock> {
        let mut blocks = self.interest_blocks().to_vec();
        blocks.extend([ParamBlock::GainR, ParamBlock::GainI]);
        blocks
    }

    pub fn label(self) -> &'static str {
        match self {
            CaseId::I => "I",
            CaseId::II => "II",
            CaseId::III => "III",
            CaseId::IV => "IV",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    Dft,
    Identity,
}

impl PlanKind {
    pub fn label(self) -> &'static str {
        match self {
            PlanKind::Dft => "dft",
            PlanKind::Identity => "identity",
        }
    }

    /// The other plan.
    pub fn alternate(self) -> Self {
        match self {
            PlanKind::Dft => PlanKind::Identity,
            PlanKind::Identity => PlanKind::Dft,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source_position: [f64; 3],
    pub source_angles: [f64; 3],
    pub dest_position: [f64; 3],
    pub dest_angles: [f64; 3],
    pub source_antennas: usize,
    pub dest_antennas: usize,
    pub carrier_hz: f64,
    pub snr_db: f64,
    pub gain: Complex64,
    pub num_streams: usize,
    pub num_transmissions: usize,
    pub plan: PlanKind,
    pub regime: Regime,
    pub case: CaseId,
    pub nu_sweep: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source_position: [1.5, 1.0, 4.0],
            source_angles: [1.1, 2.2, 0.7],
            dest_position: [2.6, 2.15, 5.1],
            dest_angles: [0.1, 0.2, 0.1],
            source_antennas: 100,
            dest_antennas: 4,
            carrier_hz: 10e9,
            snr_db: 10.0,
            gain: Complex64::new(1.0, 1.0) / 2f64.sqrt(),
            num_streams: 16,
            num_transmissions: 20,
            plan: PlanKind::Dft,
            regime: Regime::NearField,
            case: CaseId::II,
            nu_sweep: vec![4, 9, 16, 25, 36, 49, 64],
        }
    }
}

const KEYS: [&str; 16] = [
    "source_position",
    "source_angles",
    "dest_position",
    "dest_angles",
    "source_antennas",
    "dest_antennas",
    "carrier_hz",
    "snr_db",
    "gain_real",
    "gain_imag",
    "num_streams",
    "num_transmissions",
    "plan",
    "regime",
    "case",
    "nu_sweep",
];

fn parse_f64(field: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::config(field, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(Error::config(field, format!("`{v}` is not finite")));
    }
    Ok(x)
}

fn parse_usize(field: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::config(field, format!("`{v}` is not a non-negative integer")))
}

fn parse_triple(field: &str, v: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::config(
            field,
            format!("expected 3 comma-separated values, got {}", parts.len()),
        ));
    }
    Ok([
        parse_f64(field, parts[0])?,
        parse_f64(field, parts[1])?,
        parse_f64(field, parts[2])?,
    ])
}

fn fmt_triple(v: &[f64; 3]) -> String {
    format!("{:?}, {:?}, {:?}", v[0], v[1], v[2])
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            let (key, value) = (key.trim(), value.trim());
            let key = KEYS
                .iter()
                .copied()
                .find(|k| *k == key)
                .ok_or_else(|| Error::config(key, "unknown key"))?;
            if seen.contains(&key) {
                return Err(Error::config(key, "given more than once"));
            }
            seen.push(key);
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("path", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "source_position" => self.source_position = parse_triple(key, v)?,
            "source_angles" => self.source_angles = parse_triple(key, v)?,
            "dest_position" => self.dest_position = parse_triple(key, v)?,
            "dest_angles" => self.dest_angles = parse_triple(key, v)?,
            "source_antennas" => self.source_antennas = parse_usize(key, v)?,
            "dest_antennas" => self.dest_antennas = parse_usize(key, v)?,
            "carrier_hz" => self.carrier_hz = parse_f64(key, v)?,
            "snr_db" => self.snr_db = parse_f64(key, v)?,
            "gain_real" => self.gain.re = parse_f64(key, v)?,
            "gain_imag" => self.gain.im = parse_f64(key, v)?,
            "num_streams" => self.num_streams = parse_usize(key, v)?,
            "num_transmissions" => self.num_transmissions = parse_usize(key, v)?,
            "plan" => {
                self.plan = match v.to_ascii_lowercase().as_str() {
                    "dft" => PlanKind::Dft,
                    "identity" => PlanKind::Identity,
                    _ => return Err(Error::config(key, format!("`{v}` is not dft or identity"))),
                }
            }
            "regime" => {
                self.regime = match v.to_ascii_lowercase().as_str() {
                    "near" => Regime::NearField,
                    "far" => Regime::FarField,
                    _ => return Err(Error::config(key, format!("`{v}` is not near or far"))),
                }
            }
            "case" => {
                self.case = CaseId::parse(v)
                    .ok_or_else(|| Error::config(key, format!("`{v}` is not I, II, III or IV")))?
            }
            "nu_sweep" => {
                self.nu_sweep = v
                    .split(',')
                    .map(|s| parse_usize(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_antennas == 0 {
            return Err(Error::config("source_antennas", "must be at least 1"));
        }
        if self.dest_antennas == 0 {
            return Err(Error::config("dest_antennas", "must be at least 1"));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::config("carrier_hz", "must be positive"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config("snr_db", "must be finite"));
        }
        if self.gain.norm() == 0.0 || !self.gain.norm().is_finite() {
            return Err(Error::config(
                "gain_real",
                "path gain must be nonzero and finite",
            ));
        }
        if self.num_transmissions == 0 {
            return Err(Error::config("num_transmissions", "must be at least 1"));
        }
        if !ALLOWED_STREAMS.contains(&self.num_streams) {
            return Err(Error::config(
                "num_streams",
                format!("{} is not one of {ALLOWED_STREAMS:?}", self.num_streams),
            ));
        }
        if self.plan == PlanKind::Dft && self.num_streams > self.source_antennas {
            return Err(Error::config(
                "num_streams",
                format!(
                    "{} streams exceed {} source antennas",
                    self.num_streams, self.source_antennas
                ),
            ));
        }
        if self.nu_sweep.is_empty() {
            return Err(Error::config(
                "nu_sweep",
                "must list at least one array size",
            ));
        }
        if self.nu_sweep.contains(&0) {
            return Err(Error::config("nu_sweep", "array sizes must be at least 1"));
        }
        if self.nu_sweep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("nu_sweep", "must be strictly increasing"));
        }
        Ok(())
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    pub fn channel(&self) -> Result<ChannelParams> {
        ChannelParams::new(self.gain, self.carrier_hz, self.snr_linear())
    }

    fn plan_for(&self, kind: PlanKind) -> Result<TransmitPlan> {
        match kind {
            PlanKind::Dft => TransmitPlan::dft(
                self.source_antennas,
                self.num_streams,
                self.num_transmissions,
            ),
            PlanKind::Identity => identity_plan(self.source_antennas, self.num_transmissions),
        }
    }

    /// The configured link with `n_u` destination antennas, `plan` and
    /// `regime` in place of the configured ones.
    pub fn scenario_with(&self, n_u: usize, plan: PlanKind, regime: Regime) -> Result<Scenario> {
        let channel = self.channel()?;
        let spacing = channel.wavelength() / 2.0;
        let node = |p: &[f64; 3], a: &[f64; 3], n: usize| -> Result<Node> {
            Ok(Node::new(
                Pose::new(Vector3::from(*p), EulerAngles::from_array(*a)?)?,
                ArrayGeometry::upa(n, spacing)?,
            ))
        };
        Scenario::new(
            node(
                &self.source_position,
                &self.source_angles,
                self.source_antennas,
            )?,
            node(&self.dest_position, &self.dest_angles, n_u)?,
            channel,
            self.plan_for(plan)?,
            regime,
        )
    }

    pub fn scenario(&self) -> Result<Scenario> {
        self.scenario_with(self.dest_antennas, self.plan, self.regime)
    }

    /// Every key in a fixed order with round-trip float formatting. Parsing
    /// the result gives back an equal config.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let sweep: Vec<String> = self.nu_sweep.iter().map(usize::to_string).collect();
        let lines = [
            ("source_position", fmt_triple(&self.source_position)),
            ("source_angles", fmt_triple(&self.source_angles)),
            ("dest_position", fmt_triple(&self.dest_position)),
            ("dest_angles", fmt_triple(&self.dest_angles)),
            ("source_antennas", self.source_antennas.to_string()),
            ("dest_antennas", self.dest_antennas.to_string()),
            ("carrier_hz", format!("{:?}", self.carrier_hz)),
            ("snr_db", format!("{:?}", self.snr_db)),
            ("gain_real", format!("{:?}", self.gain.re)),
            ("gain_imag", format!("{:?}", self.gain.im)),
            ("num_streams", self.num_streams.to_string()),
            ("num_transmissions", self.num_transmissions.to_string()),
            ("plan", self.plan.label().to_string()),
            ("regime", self.regime.label().to_string()),
            ("case", self.case.label().to_string()),
            ("nu_sweep", sweep.join(", ")),
        ];
        for (k, v) in lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
