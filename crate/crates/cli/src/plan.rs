//! Plan and optimizer-config files: flat `key = value` structured text
//! with one level of array values for sweep axes.
//!
//! Syntax:
//!
//! * one `key = value` pair per line; `#` starts a comment; blank lines
//!   ignored,
//! * sweep axes take arrays `[a, b, c]` or bare scalars (a 1-element
//!   axis),
//! * `rotation` lines repeat, one recipe descriptor per line (their
//!   descriptors contain commas, so they do not nest inside arrays),
//! * all angles in radians, all SNRs in dB.
//!
//! Diagnostics carry 1-based line numbers.

use anyhow::{anyhow, bail, Context, Result};
use rotsim_core::montecarlo::{ChannelKind, ReceiverKind, SimPoint};
use rotsim_core::optimizer::{ObjectiveKind, RbfKernel};
use rotsim_core::rotations::RotationRecipe;

/// A parsed simulation plan: grid axes plus execution parameters.
#[derive(Debug, Clone)]
pub struct Plan {
    pub channels: Vec<usize>,
    pub qam_order: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub sigma2_p: Vec<f64>,
    pub rotations: Vec<RotationRecipe>,
    pub receivers: Vec<ReceiverKind>,
    pub channel_kinds: Vec<ChannelKind>,
    pub es: f64,
    pub min_symbols: u64,
    pub shards: u32,
    pub seed: u64,
}

impl Default for Plan {
    fn default() -> Self {
        Self {
            channels: vec![2],
            qam_order: vec![64],
            snr_db: vec![22.5],
            sigma2_p: vec![1e-2],
            rotations: vec![],
            receivers: vec![ReceiverKind::PerChannel],
            channel_kinds: vec![ChannelKind::PhaseNoise],
            es: 1.0,
            min_symbols: 1_000_000,
            shards: 16,
            seed: 0,
        }
    }
}

/// One raw `key = value` line.
fn split_line(line: &str, lineno: usize) -> Result<Option<(&str, &str)>> {
    let text = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
    .trim();
    if text.is_empty() {
        return Ok(None);
    }
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| anyhow!("line {lineno}: expected `key = value`, got `{text}`"))?;
    Ok(Some((key.trim(), value.trim())))
}

fn parse_array<T, F>(value: &str, lineno: usize, what: &str, parse: F) -> Result<Vec<T>>
where
    F: Fn(&str) -> Result<T>,
{
    let items: Vec<&str> = if let Some(inner) = value.strip_prefix('[') {
        let inner = inner
            .strip_suffix(']')
            .ok_or_else(|| anyhow!("line {lineno}: unterminated array for {what}"))?;
        inner.split(',').map(str::trim).collect()
    } else {
        vec![value]
    };
    items
        .into_iter()
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).with_context(|| format!("line {lineno}: bad {what} value `{s}`")))
        .collect()
}

fn parse_receiver(s: &str) -> Result<ReceiverKind> {
    match s {
        "per-channel" => Ok(ReceiverKind::PerChannel),
        "joint" => Ok(ReceiverKind::Joint),
        _ => bail!("expected `per-channel` or `joint`"),
    }
}

fn parse_channel_kind(s: &str) -> Result<ChannelKind> {
    match s {
        "phase-noise" => Ok(ChannelKind::PhaseNoise),
        "asymptotic" => Ok(ChannelKind::Asymptotic),
        _ => bail!("expected `phase-noise` or `asymptotic`"),
    }
}

impl Plan {
    pub fn parse(text: &str) -> Result<Self> {
        let mut plan = Plan::default();
        let mut saw_rotation = false;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let Some((key, value)) = split_line(line, lineno)? else {
                continue;
            };
            match key {
                "channels" => {
                    plan.channels = parse_array(value, lineno, "channels", |s| {
                        s.parse::<usize>().map_err(Into::into)
                    })?
                }
                "qam_order" => {
                    plan.qam_order = parse_array(value, lineno, "qam_order", |s| {
                        s.parse::<usize>().map_err(Into::into)
                    })?
                }
                "snr_db" => {
                    plan.snr_db = parse_array(value, lineno, "snr_db", |s| {
                        s.parse::<f64>().map_err(Into::into)
                    })?
                }
                "sigma2_p" => {
                    plan.sigma2_p = parse_array(value, lineno, "sigma2_p", |s| {
                        s.parse::<f64>().map_err(Into::into)
                    })?
                }
                "rotation" => {
                    if !saw_rotation {
                        plan.rotations.clear();
                        saw_rotation = true;
                    }
                    let recipe = RotationRecipe::parse(value)
                        .map_err(|e| anyhow!("line {lineno}: bad rotation descriptor: {e}"))?;
                    plan.rotations.push(recipe);
                }
                "receiver" => {
                    plan.receivers = parse_array(value, lineno, "receiver", parse_receiver)?
                }
                "channel" => {
                    plan.channel_kinds =
                        parse_array(value, lineno, "channel", parse_channel_kind)?
                }
                "es" => {
                    plan.es = value
                        .parse()
                        .with_context(|| format!("line {lineno}: bad es value `{value}`"))?
                }
                "min_symbols" => {
                    plan.min_symbols = value
                        .parse()
                        .with_context(|| format!("line {lineno}: bad min_symbols `{value}`"))?
                }
                "shards" => {
                    plan.shards = value
                        .parse()
                        .with_context(|| format!("line {lineno}: bad shards `{value}`"))?
                }
                "seed" => {
                    plan.seed = value
                        .parse()
                        .with_context(|| format!("line {lineno}: bad seed `{value}`"))?
                }
                _ => bail!("line {lineno}: unknown key `{key}`"),
            }
        }
        if plan.rotations.is_empty() {
            plan.rotations.push(RotationRecipe::Identity);
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        for axis in [
            ("channels", self.channels.is_empty()),
            ("qam_order", self.qam_order.is_empty()),
            ("snr_db", self.snr_db.is_empty()),
            ("sigma2_p", self.sigma2_p.is_empty()),
            ("receiver", self.receivers.is_empty()),
            ("channel", self.channel_kinds.is_empty()),
        ] {
            if axis.1 {
                bail!("axis `{}` is empty", axis.0);
            }
        }
        if self.shards == 0 {
            bail!("shards must be positive");
        }
        for r in &self.rotations {
            if let Some(nc) = r.channels() {
                if !self.channels.contains(&nc) {
                    bail!(
                        "rotation `{}` spans {nc} channels, not on the channels axis",
                        r.descriptor()
                    );
                }
            }
        }
        Ok(())
    }

    /// Expands the grid in a documented, stable order: channels (slowest),
    /// then qam_order, snr_db, sigma2_p, rotation, receiver, channel kind
    /// (fastest). The enumeration index is the point id. Combinations where
    /// a fixed-size rotation does not match the channel count are skipped.
    pub fn expand(&self) -> Vec<SimPoint> {
        let mut points = Vec::new();
        for &n in &self.channels {
            for &m in &self.qam_order {
                for &snr in &self.snr_db {
                    for &s2 in &self.sigma2_p {
                        for rot in &self.rotations {
                            if rot.channels().is_some_and(|nc| nc != n) {
                                continue;
                            }
                            for &rx in &self.receivers {
                                for &ck in &self.channel_kinds {
                                    points.push(SimPoint {
                                        channels: n,
                                        qam_order: m,
                                        es: self.es,
                                        snr_db: snr,
                                        sigma2_p: s2,
                                        rotation: rot.clone(),
                                        receiver: rx,
                                        channel: ck,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        points
    }
}

/// Parsed optimizer-run configuration.
#[derive(Debug, Clone)]
pub struct OptimizeConfig {
    pub objective: ObjectiveKind,
    pub receiver: ReceiverKind,
    pub channels: usize,
    pub qam_order: usize,
    pub snr_db: f64,
    pub sigma2_p: f64,
    pub es: f64,
    pub budget: usize,
    pub initial_design: usize,
    pub symbols_per_eval: u64,
    pub shards: u32,
    pub seed: u64,
    pub kernel: RbfKernel,
    pub common_random_numbers: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveKind::Bler,
            receiver: ReceiverKind::Joint,
            channels: 2,
            qam_order: 64,
            snr_db: 22.5,
            sigma2_p: 1e-2,
            es: 1.0,
            budget: 150,
            initial_design: 24,
            symbols_per_eval: 1_000_000,
            shards: 16,
            seed: 0,
            kernel: RbfKernel::Cubic,
            common_random_numbers: true,
        }
    }
}

impl OptimizeConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = OptimizeConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let Some((key, value)) = split_line(line, lineno)? else {
                continue;
            };
            let ctx = || format!("line {lineno}: bad {key} value `{value}`");
            match key {
                "objective" => {
                    cfg.objective = match value {
                        "bler" => ObjectiveKind::Bler,
                        "ber" => ObjectiveKind::Ber,
                        "ser" => ObjectiveKind::Ser,
                        "neg-air" => ObjectiveKind::NegAir,
                        _ => bail!(
                            "line {lineno}: objective must be bler|ber|ser|neg-air, got `{value}`"
                        ),
                    }
                }
                "receiver" => {
                    cfg.receiver = parse_receiver(value).with_context(ctx)?;
                }
                "channels" => cfg.channels = value.parse().with_context(ctx)?,
                "qam_order" => cfg.qam_order = value.parse().with_context(ctx)?,
                "snr_db" => cfg.snr_db = value.parse().with_context(ctx)?,
                "sigma2_p" => cfg.sigma2_p = value.parse().with_context(ctx)?,
                "es" => cfg.es = value.parse().with_context(ctx)?,
                "budget" => cfg.budget = value.parse().with_context(ctx)?,
                "initial_design" => cfg.initial_design = value.parse().with_context(ctx)?,
                "symbols_per_eval" => cfg.symbols_per_eval = value.parse().with_context(ctx)?,
                "shards" => cfg.shards = value.parse().with_context(ctx)?,
                "seed" => cfg.seed = value.parse().with_context(ctx)?,
                "kernel" => {
                    cfg.kernel = match value {
                        "cubic" => RbfKernel::Cubic,
                        "thin-plate" => RbfKernel::ThinPlate,
                        _ => bail!("line {lineno}: kernel must be cubic|thin-plate"),
                    }
                }
                "common_random_numbers" => {
                    cfg.common_random_numbers = value.parse().with_context(ctx)?
                }
                _ => bail!("line {lineno}: unknown key `{key}`"),
            }
        }
        if cfg.channels != 2 {
            bail!("the angle optimizer works on 4 real dimensions (channels = 2)");
        }
        if cfg.budget < cfg.initial_design {
            bail!("budget ({}) must cover the initial design ({})", cfg.budget, cfg.initial_design);
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_plan_round_trip() {
        let text = "\
# a two-point sweep
channels = 2
qam_order = [64]
snr_db = [22.5]
sigma2_p = [1e-3, 1e-2]
rotation = kind=hadamard order=2
rotation = kind=identity
receiver = [per-channel]
min_symbols = 1000
seed = 9
";
        let plan = Plan::parse(text).unwrap();
        assert_eq!(plan.sigma2_p, vec![1e-3, 1e-2]);
        assert_eq!(plan.rotations.len(), 2);
        assert_eq!(plan.seed, 9);
        let points = plan.expand();
        assert_eq!(points.len(), 4);
        // sigma2_p is slower than rotation in the documented order.
        assert_eq!(points[0].sigma2_p, 1e-3);
        assert_eq!(points[1].rotation, RotationRecipe::Identity);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let err = Plan::parse("channels = 2\nbogus_key = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = Plan::parse("snr_db = [1, x]\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 1"), "{err:#}");
        let err = Plan::parse("channels =\n").unwrap_err();
        assert!(format!("{err:#}").contains("empty"), "{err:#}");
    }

    #[test]
    fn mismatched_rotation_size_is_skipped_or_rejected() {
        // A 2-channel rotation with a 4-channel axis is rejected outright.
        let err = Plan::parse("channels = 4\nrotation = kind=ser4\n").unwrap_err();
        assert!(err.to_string().contains("ser4"), "{err}");
        // With both sizes on the axis, mismatched combinations are skipped.
        let plan = Plan::parse(
            "channels = [2, 4]\nrotation = kind=ser4\nrotation = kind=identity\n",
        )
        .unwrap();
        let points = plan.expand();
        assert_eq!(
            points
                .iter()
                .filter(|p| p.rotation == RotationRecipe::Ser4)
                .count(),
            1
        );
        assert_eq!(
            points
                .iter()
                .filter(|p| p.rotation == RotationRecipe::Identity)
                .count(),
            2
        );
    }

    #[test]
    fn optimize_config_parses() {
        let cfg = OptimizeConfig::parse(
            "objective = ser\nreceiver = per-channel\nbudget = 40\ninitial_design = 10\nsymbols_per_eval = 5000\nkernel = thin-plate\n",
        )
        .unwrap();
        assert_eq!(cfg.objective, ObjectiveKind::Ser);
        assert_eq!(cfg.budget, 40);
        assert_eq!(cfg.kernel, RbfKernel::ThinPlate);
        assert!(OptimizeConfig::parse("budget = 5\n").is_err());
        assert!(OptimizeConfig::parse("objective = speed\n").is_err());
    }
}
