use std::fmt::Write as _;

use planvec::config::{parse_entries, ConfigError};
use planvec::heatmap::BetaSet;
use planvec::mask_io::{ClassId, Palette};
use planvec::reconstruct::HeightProfile;
use planvec::vectorize::Thresholds;

use crate::{CliError, ThresholdFlags};

/// Everything a run can be configured with.
#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub thresholds: Thresholds,
    pub betas: BetaSet,
    pub profile: HeightProfile,
    pub palette: Palette,
    pub threads: Option<usize>,
}

fn parse_color(v: &str) -> Option<[u8; 3]> {
    let parts: Vec<u8> = v.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    parts.try_into().ok()
}

impl PipelineConfig {
    /// Keys: `eps_u`, `eps_d`, `eps_a_deg`, `betas`, `threads`,
    /// `pixel_scale`, `<class>.base`, `<class>.height` and
    /// `palette.<class>=r,g,b`.
    pub fn from_config(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        for e in parse_entries(text)? {
            match e.key.as_str() {
                "eps_u" => cfg.thresholds.eps_u = e.parse()?,
                "eps_d" => cfg.thresholds.eps_d = e.parse()?,
                "eps_a_deg" => cfg.thresholds.eps_a = e.parse::<f64>()?.to_radians().cos(),
                "betas" => cfg.betas = e.parse()?,
                "threads" => {
                    let n: usize = e.parse()?;
                    if n == 0 {
                        return Err(e.invalid("must be positive"));
                    }
                    cfg.threads = Some(n);
                }
                key if key.starts_with("palette.") => {
                    let class = ClassId::from_slug(&key["palette.".len()..]).ok_or_else(|| e.unknown())?;
                    let color = parse_color(&e.value).ok_or_else(|| e.invalid("expected r,g,b"))?;
                    cfg.palette = cfg
                        .palette
                        .clone()
                        .with_color(class, color)
                        .map_err(|err| e.invalid(err.to_string()))?;
                }
                _ => {
                    if !cfg.profile.apply(&e)? {
                        return Err(e.unknown());
                    }
                }
            }
        }
        if let Err(err) = cfg.thresholds.validate() {
            return Err(ConfigError::InvalidValue {
                line: 0,
                key: "thresholds".into(),
                value: String::new(),
                msg: err.to_string(),
            });
        }
        if let Err(err) = cfg.profile.validate() {
            return Err(ConfigError::InvalidValue {
                line: 0,
                key: "profile".into(),
                value: String::new(),
                msg: err.to_string(),
            });
        }
        Ok(cfg)
    }

    pub fn apply_thresholds(&mut self, flags: &ThresholdFlags) -> Result<(), CliError> {
        if let Some(v) = flags.eps_u {
            self.thresholds.eps_u = v;
        }
        if let Some(v) = flags.eps_d {
            self.thresholds.eps_d = v;
        }
        if let Some(v) = flags.eps_a_deg {
            self.thresholds.eps_a = v.to_radians().cos();
        }
        self.thresholds.validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn apply_pixel_scale(&mut self, scale: Option<f64>) -> Result<(), CliError> {
        if let Some(s) = scale {
            self.profile.pixel_scale = s;
        }
        self.profile.validate().map_err(|e| CliError::Config(e.to_string()))
    }

    /// Echo of the effective settings in the same key=value form.
    pub fn to_config(&self) -> String {
        let t = &self.thresholds;
        let mut out = String::new();
        writeln!(out, "eps_u={}", t.eps_u).unwrap();
        writeln!(out, "eps_d={}", t.eps_d).unwrap();
        writeln!(out, "eps_a_deg={:.6}", t.eps_a.acos().to_degrees()).unwrap();
        writeln!(out, "betas={}", self.betas).unwrap();
        writeln!(out, "pixel_scale={}", self.profile.pixel_scale).unwrap();
        for c in ClassId::structural() {
            let l = self.profile.level(c);
            writeln!(out, "{}.base={}\n{}.height={}", c.slug(), l.base, c.slug(), l.height).unwrap();
        }
        if let Some(n) = self.threads {
            writeln!(out, "threads={n}").unwrap();
        }
        out
    }
}
