//! Flat `key = value` configuration with `[v1,v2,...]` lists.
//!
//! A config file holds one assignment per line; `#` starts a comment.
//! Command-line `key=value` arguments override file values. Every key a
//! subcommand does not know is rejected.

use std::collections::BTreeMap;
use std::str::FromStr;

use bcc_core::schemes::SchemeKind;
use bcc_core::sim::LoadBasis;

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "BCC_SEED";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    Unknown(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("`{key}`: expected {expected}, got `{value}`")]
    Type {
        key: &'static str,
        expected: &'static str,
        value: String,
    },
    #[error("`{key}`: {reason}")]
    Range { key: &'static str, reason: String },
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Scalar(String),
    List(Vec<String>),
}

impl Value {
    fn parse(raw: &str) -> Self {
        let raw = raw.trim();
        match raw.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            Some(inner) if inner.trim().is_empty() => Value::List(Vec::new()),
            Some(inner) => Value::List(inner.split(',').map(|s| s.trim().to_string()).collect()),
            None => Value::Scalar(raw.to_string()),
        }
    }

    fn text(&self) -> String {
        match self {
            Value::Scalar(s) => s.clone(),
            Value::List(items) => format!("[{}]", items.join(",")),
        }
    }
}

/// Raw key/value pairs, later-set values winning.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, Value>,
}

impl RawConfig {
    pub fn from_file_text(text: &str) -> ConfigResult<Self> {
        let mut raw = RawConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            raw.set_assignment(line).map_err(|_| ConfigError::Syntax {
                line: idx + 1,
                text: line.to_string(),
            })?;
        }
        Ok(raw)
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, args: &[S]) -> ConfigResult<()> {
        for arg in args {
            let arg = arg.as_ref();
            self.set_assignment(arg).map_err(|_| ConfigError::Syntax {
                line: 0,
                text: arg.to_string(),
            })?;
        }
        Ok(())
    }

    fn set_assignment(&mut self, text: &str) -> Result<(), ()> {
        let (key, value) = text.split_once('=').ok_or(())?;
        let key = key.trim();
        if key.is_empty() {
            return Err(());
        }
        self.values.insert(key.to_string(), Value::parse(value));
        Ok(())
    }

    /// Fails on the first key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> ConfigResult<()> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(ConfigError::Unknown(k.clone())),
            None => Ok(()),
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn scalar(&self, key: &'static str) -> ConfigResult<Option<&str>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Scalar(s)) => Ok(Some(s)),
            Some(v) => Err(ConfigError::Type {
                key,
                expected: "a single value",
                value: v.text(),
            }),
        }
    }

    pub fn get<T: FromStr>(
        &self,
        key: &'static str,
        expected: &'static str,
    ) -> ConfigResult<Option<T>> {
        self.scalar(key)?
            .map(|s| {
                s.parse().map_err(|_| ConfigError::Type {
                    key,
                    expected,
                    value: s.to_string(),
                })
            })
            .transpose()
    }

    pub fn usize(&self, key: &'static str) -> ConfigResult<Option<usize>> {
        self.get(key, "a non-negative integer")
    }

    pub fn f64(&self, key: &'static str) -> ConfigResult<Option<f64>> {
        self.get(key, "a number")
    }

    pub fn bool(&self, key: &'static str) -> ConfigResult<Option<bool>> {
        self.get(key, "true or false")
    }

    pub fn required_usize(&self, key: &'static str) -> ConfigResult<usize> {
        self.usize(key)?.ok_or(ConfigError::Missing(key))
    }

    /// A list, or a scalar treated as a one-element list.
    pub fn list<T: FromStr>(
        &self,
        key: &'static str,
        expected: &'static str,
    ) -> ConfigResult<Option<Vec<T>>> {
        let items = match self.values.get(key) {
            None => return Ok(None),
            Some(Value::Scalar(s)) => vec![s.clone()],
            Some(Value::List(items)) => items.clone(),
        };
        items
            .iter()
            .map(|s| {
                s.parse().map_err(|_| ConfigError::Type {
                    key,
                    expected,
                    value: s.clone(),
                })
            })
            .collect::<ConfigResult<Vec<T>>>()
            .map(Some)
    }

    pub fn is_scalar(&self, key: &str) -> bool {
        matches!(self.values.get(key), Some(Value::Scalar(_)))
    }
}

pub fn positive(key: &'static str, value: usize) -> ConfigResult<usize> {
    if value == 0 {
        return Err(ConfigError::Range {
            key,
            reason: "must be at least 1".into(),
        });
    }
    Ok(value)
}

fn range(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        key,
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatencyParams {
    pub mu: Vec<f64>,
    pub a: Vec<f64>,
}

impl LatencyParams {
    /// Reads `mu` and `a` for `n` workers; scalars broadcast.
    fn read(raw: &RawConfig, n: usize, default_mu: f64, default_a: f64) -> ConfigResult<Self> {
        let expand = |key: &'static str, default: f64| -> ConfigResult<Vec<f64>> {
            let values = raw
                .list::<f64>(key, "a number or list of numbers")?
                .unwrap_or(vec![default]);
            if values.len() == 1 && (raw.is_scalar(key) || !raw.contains(key)) {
                return Ok(vec![values[0]; n]);
            }
            if values.len() != n {
                return Err(range(
                    key,
                    format!("expected {n} values, got {}", values.len()),
                ));
            }
            Ok(values)
        };
        let mu = expand("mu", default_mu)?;
        let a = expand("a", default_a)?;
        if mu.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(range("mu", "every rate must be positive"));
        }
        if a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(range("a", "every shift must be non-negative"));
        }
        Ok(LatencyParams { mu, a })
    }

    pub fn model(&self) -> bcc_core::latency::LatencyModel {
        bcc_core::latency::LatencyModel::new(self.mu.clone(), self.a.clone()).expect("validated")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffConfig {
    pub m: usize,
    pub n: usize,
    pub r_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateConfig {
    pub scheme: SchemeKind,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub loads: Option<Vec<usize>>,
    pub latency: LatencyParams,
    pub basis: LoadBasis,
    pub freeze_placement: bool,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroConfig {
    pub m: usize,
    pub latency: LatencyParams,
    /// Count the generalized BCC loads are optimized for.
    pub s: usize,
    pub trials: usize,
    pub optimizer_trials: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRunConfig {
    pub p: usize,
    pub d: usize,
    pub n: usize,
    pub scheme: SchemeKind,
    pub r: usize,
    pub loads: Option<Vec<usize>>,
    pub latency: LatencyParams,
    pub basis: LoadBasis,
    pub iterations: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub persistent_stragglers: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouponConfig {
    pub types: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentConfig {
    Tradeoff(TradeoffConfig),
    Simulate(SimulateConfig),
    Hetero(HeteroConfig),
    Train(TrainRunConfig),
    Coupon(CouponConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Tradeoff,
    Simulate,
    Hetero,
    Train,
    Coupon,
}

impl Subcommand {
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Subcommand::Tradeoff => &["m", "n", "r", "trials", "seed"],
            Subcommand::Simulate => &[
                "scheme",
                "n",
                "m",
                "r",
                "loads",
                "mu",
                "a",
                "basis",
                "freeze_placement",
                "trials",
                "seed",
            ],
            Subcommand::Hetero => &[
                "m",
                "n",
                "mu",
                "a",
                "s",
                "trials",
                "optimizer_trials",
                "seed",
            ],
            Subcommand::Train => &[
                "p",
                "d",
                "n",
                "scheme",
                "r",
                "loads",
                "mu",
                "a",
                "basis",
                "iterations",
                "step_size",
                "momentum",
                "persistent_stragglers",
                "seed",
            ],
            Subcommand::Coupon => &["N", "trials", "seed"],
        }
    }
}

fn seed(raw: &RawConfig, env_seed: Option<&str>) -> ConfigResult<u64> {
    if let Some(s) = raw.get::<u64>("seed", "a 64-bit unsigned integer")? {
        return Ok(s);
    }
    match env_seed {
        Some(text) => text.trim().parse().map_err(|_| ConfigError::Type {
            key: "seed",
            expected: "a 64-bit unsigned integer (from BCC_SEED)",
            value: text.to_string(),
        }),
        None => Ok(0),
    }
}

fn trials(raw: &RawConfig, default: usize) -> ConfigResult<usize> {
    let t = raw.usize("trials")?.unwrap_or(default);
    if t < 2 {
        return Err(range("trials", "must be at least 2"));
    }
    Ok(t)
}

fn scheme(raw: &RawConfig, default: SchemeKind) -> ConfigResult<SchemeKind> {
    raw.get("scheme", "one of uncoded|random|cr|bcc|gbcc")
        .map(|s| s.unwrap_or(default))
}

fn basis(raw: &RawConfig) -> ConfigResult<LoadBasis> {
    raw.get("basis", "examples or messages")
        .map(|b| b.unwrap_or_default())
}

/// Validates a scheme's load parameters against `n` workers and `m` units.
fn scheme_loads(
    raw: &RawConfig,
    kind: SchemeKind,
    n: usize,
    m: usize,
    default_r: Option<usize>,
) -> ConfigResult<(usize, Option<Vec<usize>>)> {
    let loads = raw.list::<usize>("loads", "a list of non-negative integers")?;
    if loads.is_some() && kind != SchemeKind::GeneralizedBcc {
        return Err(range("loads", "only applies to scheme=gbcc"));
    }
    if let Some(loads) = &loads {
        if loads.len() != n {
            return Err(range(
                "loads",
                format!("expected {n} values, got {}", loads.len()),
            ));
        }
        if let Some(l) = loads.iter().find(|&&l| l > m) {
            return Err(range("loads", format!("load {l} exceeds m = {m}")));
        }
        return Ok((
            loads.iter().copied().max().unwrap_or(0),
            Some(loads.clone()),
        ));
    }
    let r = match kind {
        SchemeKind::Uncoded => raw.usize("r")?.unwrap_or(m.div_ceil(n)),
        _ => match (raw.usize("r")?, default_r) {
            (Some(r), _) | (None, Some(r)) => r,
            (None, None) => return Err(ConfigError::Missing("r")),
        },
    };
    if r == 0 || r > m {
        return Err(range(
            "r",
            format!("must satisfy 1 <= r <= m = {m}, got {r}"),
        ));
    }
    if kind == SchemeKind::Uncoded && m < n {
        return Err(range(
            "m",
            format!("uncoded needs at least one unit per worker, got m = {m} < n = {n}"),
        ));
    }
    if kind == SchemeKind::CyclicRepetition && m != n {
        return Err(range(
            "m",
            format!("cyclic repetition needs m = n = {n}, got {m}"),
        ));
    }
    Ok((r, None))
}

/// Builds a validated experiment from a raw config. `env_seed` is the value
/// of [`SEED_ENV`], if set.
pub fn parse_config(
    cmd: Subcommand,
    raw: &RawConfig,
    env_seed: Option<&str>,
) -> ConfigResult<ExperimentConfig> {
    raw.check_keys(cmd.keys())?;
    let seed = seed(raw, env_seed)?;
    Ok(match cmd {
        Subcommand::Tradeoff => {
            let m = positive("m", raw.required_usize("m")?)?;
            let n = positive("n", raw.usize("n")?.unwrap_or(m))?;
            let r_values = raw
                .list::<usize>("r", "a list of positive integers")?
                .unwrap_or((1..=m).collect());
            if let Some(r) = r_values.iter().find(|&&r| r == 0 || r > m) {
                return Err(range(
                    "r",
                    format!("must satisfy 1 <= r <= m = {m}, got {r}"),
                ));
            }
            ExperimentConfig::Tradeoff(TradeoffConfig {
                m,
                n,
                r_values,
                trials: trials(raw, 2000)?,
                seed,
            })
        }
        Subcommand::Simulate => {
            let kind = scheme(raw, SchemeKind::Bcc)?;
            let n = positive("n", raw.required_usize("n")?)?;
            let m = positive("m", raw.usize("m")?.unwrap_or(n))?;
            let (r, loads) = scheme_loads(raw, kind, n, m, None)?;
            ExperimentConfig::Simulate(SimulateConfig {
                scheme: kind,
                n,
                m,
                r,
                loads,
                latency: LatencyParams::read(raw, n, 1.0, 1.0)?,
                basis: basis(raw)?,
                freeze_placement: raw.bool("freeze_placement")?.unwrap_or(false),
                trials: trials(raw, 10_000)?,
                seed,
            })
        }
        Subcommand::Hetero => {
            let m = raw.required_usize("m")?;
            if m < 2 {
                return Err(range("m", "must be at least 2"));
            }
            let n = match (raw.usize("n")?, raw.list::<f64>("mu", "a list of numbers")?) {
                (Some(n), _) => positive("n", n)?,
                (None, Some(mu)) if !raw.is_scalar("mu") => mu.len(),
                _ => return Err(ConfigError::Missing("n")),
            };
            if m < n {
                return Err(range("m", format!("load balancing needs m >= n = {n}")));
            }
            let default_s = ((m as f64 * (m as f64).ln()).floor() as usize).min(n * m);
            let s = positive("s", raw.usize("s")?.unwrap_or(default_s))?;
            if s > n * m {
                return Err(range("s", format!("exceeds the capacity n·m = {}", n * m)));
            }
            let optimizer_trials = positive(
                "optimizer_trials",
                raw.usize("optimizer_trials")?.unwrap_or(1000),
            )?;
            ExperimentConfig::Hetero(HeteroConfig {
                m,
                latency: LatencyParams::read(raw, n, 1.0, 1.0)?,
                s,
                trials: trials(raw, 2000)?,
                optimizer_trials,
                seed,
            })
        }
        Subcommand::Train => {
            let n = positive("n", raw.usize("n")?.unwrap_or(50))?;
            let d = positive("d", raw.usize("d")?.unwrap_or(2000))?;
            if d < n {
                return Err(range(
                    "d",
                    format!("needs at least one example per worker (n = {n})"),
                ));
            }
            let kind = scheme(raw, SchemeKind::Bcc)?;
            let (r, loads) = scheme_loads(raw, kind, n, n, Some(10.min(n)))?;
            let step_size = raw.f64("step_size")?.unwrap_or(2.0);
            if !(step_size.is_finite() && step_size >= 0.0) {
                return Err(range("step_size", "must be finite and non-negative"));
            }
            let momentum = raw.f64("momentum")?.unwrap_or(0.9);
            if !(0.0..1.0).contains(&momentum) {
                return Err(range("momentum", "must lie in [0, 1)"));
            }
            ExperimentConfig::Train(TrainRunConfig {
                p: positive("p", raw.usize("p")?.unwrap_or(200))?,
                d,
                n,
                scheme: kind,
                r,
                loads,
                latency: LatencyParams::read(raw, n, 1.0, 1.0)?,
                basis: basis(raw)?,
                iterations: positive("iterations", raw.usize("iterations")?.unwrap_or(100))?,
                step_size,
                momentum,
                persistent_stragglers: raw.bool("persistent_stragglers")?.unwrap_or(false),
                seed,
            })
        }
        Subcommand::Coupon => ExperimentConfig::Coupon(CouponConfig {
            types: positive("N", raw.required_usize("N")?)?,
            trials: trials(raw, 20_000)?,
            seed,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(cmd: Subcommand, args: &[&str]) -> ConfigResult<ExperimentConfig> {
        let mut raw = RawConfig::default();
        raw.apply_overrides(args)?;
        parse_config(cmd, &raw, None)
    }

    #[test]
    fn flag_style_config_is_valid() {
        let cfg = parse(
            Subcommand::Simulate,
            &[
                "m=100",
                "n=100",
                "r=10",
                "scheme=bcc",
                "trials=20000",
                "seed=42",
            ],
        )
        .unwrap();
        let ExperimentConfig::Simulate(sim) = cfg else {
            panic!()
        };
        assert_eq!(
            (sim.n, sim.m, sim.r, sim.trials, sim.seed),
            (100, 100, 10, 20000, 42)
        );
        assert_eq!(sim.scheme, SchemeKind::Bcc);
    }

    #[test]
    fn zero_load_names_r() {
        let err = parse(Subcommand::Simulate, &["n=10", "r=0"]).unwrap_err();
        assert!(matches!(err, ConfigError::Range { key: "r", .. }));
        assert!(err.to_string().contains("`r`"));
    }

    #[test]
    fn scalar_shift_broadcasts() {
        let cfg = parse(Subcommand::Hetero, &["mu=[1,1,20]", "a=20", "m=6"]).unwrap();
        let ExperimentConfig::Hetero(h) = cfg else {
            panic!()
        };
        assert_eq!(h.latency.a, vec![20.0; 3]);
        assert_eq!(h.latency.mu, vec![1.0, 1.0, 20.0]);
    }

    #[test]
    fn unknown_key_is_named() {
        assert_eq!(
            parse(Subcommand::Coupon, &["N=10", "bogus=1"]).unwrap_err(),
            ConfigError::Unknown("bogus".into())
        );
    }

    #[test]
    fn type_and_missing_errors() {
        assert!(matches!(
            parse(Subcommand::Coupon, &["N=ten"]).unwrap_err(),
            ConfigError::Type { key: "N", .. }
        ));
        assert_eq!(
            parse(Subcommand::Coupon, &[]).unwrap_err(),
            ConfigError::Missing("N")
        );
        assert!(matches!(
            parse(Subcommand::Simulate, &["n=3", "r=1", "mu=[1,2]"]).unwrap_err(),
            ConfigError::Range { key: "mu", .. }
        ));
    }

    #[test]
    fn file_then_overrides() {
        let mut raw =
            RawConfig::from_file_text("# coupon run\nN = 5\ntrials = 100 # few\n").unwrap();
        raw.apply_overrides(&["N=7"]).unwrap();
        let ExperimentConfig::Coupon(c) =
            parse_config(Subcommand::Coupon, &raw, Some("9")).unwrap()
        else {
            panic!()
        };
        assert_eq!((c.types, c.trials, c.seed), (7, 100, 9));
        assert!(matches!(
            RawConfig::from_file_text("N 5").unwrap_err(),
            ConfigError::Syntax { line: 1, .. }
        ));
    }

    #[test]
    fn cyclic_repetition_needs_square_layout() {
        assert!(matches!(
            parse(Subcommand::Simulate, &["scheme=cr", "n=10", "m=20", "r=2"]).unwrap_err(),
            ConfigError::Range { key: "m", .. }
        ));
    }
}
