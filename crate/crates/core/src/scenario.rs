//! Ambient temperature and internal heat-load profiles.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermal::ScenarioSample;

const DAY_S: f64 = 86_400.0;

/// Generator settings. Temperatures in °C, loads in kW, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dt: f64,
    pub horizon: f64,
    pub t_out_min: f64,
    pub t_out_max: f64,
    /// Hour of the ambient maximum.
    pub peak_hour: f64,
    /// Stationary standard deviation of the ambient noise, °C.
    pub t_out_noise: f64,
    /// Per-sample autocorrelation of the ambient noise.
    pub t_out_rho: f64,
    /// Peak internal load per building, kW.
    pub load_peak: Vec<f64>,
    /// Night-time load as a fraction of the peak.
    pub load_trough_frac: f64,
    pub load_peak_hour: f64,
    /// Stationary relative standard deviation of the load noise.
    pub load_noise: f64,
    pub load_rho: f64,
    /// Noise magnitudes are clipped at this many standard deviations.
    pub clip_sigmas: f64,
}

impl ScenarioConfig {
    /// One day at 60 s resolution with loads peaking at `load_peak`.
    pub fn daily(load_peak: Vec<f64>) -> Self {
        Self {
            dt: 60.0,
            horizon: DAY_S,
            t_out_min: 26.0,
            t_out_max: 35.0,
            peak_hour: 14.0,
            t_out_noise: 0.3,
            t_out_rho: 0.95,
            load_peak,
            load_trough_frac: 0.5,
            load_peak_hour: 14.0,
            load_noise: 0.05,
            load_rho: 0.9,
            clip_sigmas: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scenario: {m}")));
        if !(self.dt > 0.0 && self.horizon >= self.dt) {
            return bad("require dt > 0 and horizon >= dt");
        }
        if !(self.t_out_min <= self.t_out_max && self.t_out_min > -40.0 && self.t_out_max < 60.0) {
            return bad("ambient range must be ordered and within [-40, 60] °C");
        }
        if !((0.0..24.0).contains(&self.peak_hour) && (0.0..24.0).contains(&self.load_peak_hour)) {
            return bad("peak hours must lie in [0, 24)");
        }
        if !(self.t_out_noise >= 0.0 && self.load_noise >= 0.0 && self.clip_sigmas > 0.0) {
            return bad("noise scales must be non-negative and the clip positive");
        }
        if !((0.0..1.0).contains(&self.t_out_rho) && (0.0..1.0).contains(&self.load_rho)) {
            return bad("noise autocorrelations must lie in [0, 1)");
        }
        if self.load_peak.is_empty() || self.load_peak.iter().any(|z| !(*z >= 0.0)) {
            return bad("need at least one non-negative building load");
        }
        if !(0.0..=1.0).contains(&self.load_trough_frac) {
            return bad("load_trough_frac must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn t_out_mean(&self) -> f64 {
        0.5 * (self.t_out_min + self.t_out_max)
    }
}

/// Sampled exogenous inputs on a uniform time grid starting at 0 s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProfile {
    pub dt: f64,
    pub t_out: Vec<f64>,
    /// Indexed `[building][sample]`.
    pub zeta: Vec<Vec<f64>>,
    pub seed: Option<u64>,
    pub horizon: f64,
}

/// Mean-reverting noise with a fixed stationary spread, clipped symmetrically.
struct Ar1 {
    rho: f64,
    innov: Option<Normal<f64>>,
    clip: f64,
    x: f64,
}

impl Ar1 {
    fn new(sigma: f64, rho: f64, clip_sigmas: f64) -> Self {
        let innov_sd = sigma * (1.0 - rho * rho).sqrt();
        Self {
            rho,
            innov: (innov_sd > 0.0).then(|| Normal::new(0.0, innov_sd).unwrap()),
            clip: clip_sigmas * sigma,
            x: 0.0,
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let Some(innov) = &self.innov else { return 0.0 };
        self.x = (self.rho * self.x + innov.sample(rng)).clamp(-self.clip, self.clip);
        self.x
    }
}

/// Diurnal cosine in [0, 1] reaching 1 at `peak_hour`.
fn diurnal(t: f64, peak_hour: f64) -> f64 {
    0.5 * (1.0 + (2.0 * PI * (t - peak_hour * 3600.0) / DAY_S).cos())
}

pub fn generate(seed: u64, cfg: &ScenarioConfig) -> Result<ScenarioProfile> {
    cfg.validate()?;
    let n_t = (cfg.horizon / cfg.dt).ceil() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amb = Ar1::new(cfg.t_out_noise, cfg.t_out_rho, cfg.clip_sigmas);
    let mut loads: Vec<Ar1> = cfg
        .load_peak
        .iter()
        .map(|_| Ar1::new(cfg.load_noise, cfg.load_rho, cfg.clip_sigmas))
        .collect();
    let mut t_out = Vec::with_capacity(n_t);
    let mut zeta = vec![Vec::with_capacity(n_t); cfg.load_peak.len()];
    let amp = cfg.t_out_max - cfg.t_out_min;
    for k in 0..n_t {
        let t = k as f64 * cfg.dt;
        let base = cfg.t_out_min + amp * diurnal(t, cfg.peak_hour);
        t_out.push(base + amb.next(&mut rng));
        let shape = cfg.load_trough_frac + (1.0 - cfg.load_trough_frac) * diurnal(t, cfg.load_peak_hour);
        for (i, peak) in cfg.load_peak.iter().enumerate() {
            let noise = loads[i].next(&mut rng);
            zeta[i].push((peak * shape * (1.0 + noise)).max(0.0));
        }
    }
    Ok(ScenarioProfile {
        dt: cfg.dt,
        t_out,
        zeta,
        seed: Some(seed),
        horizon: cfg.horizon,
    })
}

impl ScenarioProfile {
    pub fn n_buildings(&self) -> usize {
        self.zeta.len()
    }

    pub fn len(&self) -> usize {
        self.t_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_out.is_empty()
    }

    /// Zero-order hold of the profile at time `t` (s); clamps past the end.
    pub fn sample(&self, t: f64) -> ScenarioSample {
        let k = ((t / self.dt).floor().max(0.0) as usize).min(self.len() - 1);
        ScenarioSample {
            t_out: self.t_out[k],
            zeta: self.zeta.iter().map(|z| z[k]).collect(),
        }
    }

    /// Copy with every load multiplied by `factor` from time `from` on.
    pub fn with_load_step(&self, from: f64, factor: f64) -> Self {
        let mut out = self.clone();
        let k0 = (from / self.dt).ceil() as usize;
        for z in &mut out.zeta {
            for v in z.iter_mut().skip(k0) {
                *v *= factor;
            }
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["time_s".to_string(), "t_out_c".to_string()];
        header.extend((1..=self.n_buildings()).map(|i| format!("zeta_b{i:02}_kw")));
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![(k as f64 * self.dt).to_string(), self.t_out[k].to_string()];
            row.extend(self.zeta.iter().map(|z| z[k].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parse a profile written by [`ScenarioProfile::save_csv`] or by hand.
    /// Row numbers in errors count the header as row 1.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "time_s" || &header[1] != "t_out_c" {
            return Err(Error::ScenarioParse {
                row: 1,
                message: "header must start with time_s,t_out_c followed by zeta columns".into(),
            });
        }
        for (j, name) in header.iter().skip(2).enumerate() {
            let expected = format!("zeta_b{:02}_kw", j + 1);
            if name != expected {
                return Err(Error::ScenarioParse {
                    row: 1,
                    message: format!("column {} is `{name}`, expected `{expected}`", j + 3),
                });
            }
        }
        let n_b = header.len() - 2;
        let mut times = Vec::new();
        let mut t_out = Vec::new();
        let mut zeta = vec![Vec::new(); n_b];
        for (idx, rec) in r.records().enumerate() {
            let row = idx + 2;
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::ScenarioParse {
                    row,
                    message: format!("{} fields, expected {}", rec.len(), header.len()),
                });
            }
            let mut vals = Vec::with_capacity(rec.len());
            for (j, f) in rec.iter().enumerate() {
                let v: f64 = f.trim().parse().map_err(|_| Error::ScenarioParse {
                    row,
                    message: format!("column `{}` is not a number: `{f}`", &header[j]),
                })?;
                if !v.is_finite() {
                    return Err(Error::ScenarioParse {
                        row,
                        message: format!("column `{}` is not finite", &header[j]),
                    });
                }
                vals.push(v);
            }
            for (j, &v) in vals[2..].iter().enumerate() {
                if v < 0.0 {
                    return Err(Error::ScenarioParse {
                        row,
                        message: format!("negative load {v} in `{}`", &header[j + 2]),
                    });
                }
                zeta[j].push(v);
            }
            times.push((row, vals[0]));
            t_out.push(vals[1]);
        }
        if times.len() < 2 {
            return Err(Error::ScenarioParse {
                row: 1,
                message: "need at least two samples".into(),
            });
        }
        if times[0].1 != 0.0 {
            return Err(Error::ScenarioParse {
                row: 2,
                message: format!("first timestamp is {}, expected 0", times[0].1),
            });
        }
        let dt = times[1].1 - times[0].1;
        for (k, &(row, t)) in times.iter().enumerate().skip(1) {
            let prev = times[k - 1].1;
            if !(t > prev) {
                return Err(Error::ScenarioParse {
                    row,
                    message: format!("timestamp {t} does not increase past {prev}"),
                });
            }
            let expected = k as f64 * dt;
            if (t - expected).abs() > 1e-6 * dt.max(1.0) {
                return Err(Error::ScenarioParse {
                    row,
                    message: format!("timestamp {t} breaks the {dt} s grid (expected {expected})"),
                });
            }
        }
        let horizon = times.last().unwrap().1;
        Ok(Self {
            dt,
            t_out,
            zeta,
            seed: None,
            horizon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::daily(vec![4000.0, 9000.0, 6000.0])
    }

    #[test]
    fn noiseless_profile_is_periodic() {
        let mut c = cfg();
        c.t_out_noise = 0.0;
        c.load_noise = 0.0;
        c.horizon = 2.0 * DAY_S;
        let p = generate(1, &c).unwrap();
        let day = (DAY_S / c.dt) as usize;
        for k in 0..day {
            assert!((p.t_out[k] - p.t_out[k + day]).abs() < 1e-9);
            assert!((p.zeta[1][k] - p.zeta[1][k + day]).abs() < 1e-9);
        }
        let k_peak = (14.0 * 3600.0 / c.dt) as usize;
        assert!((p.t_out[k_peak] - 35.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_profile() {
        assert_eq!(generate(7, &cfg()).unwrap(), generate(7, &cfg()).unwrap());
        assert_ne!(generate(7, &cfg()).unwrap().t_out, generate(8, &cfg()).unwrap().t_out);
    }

    #[test]
    fn ambient_mean_matches_configuration() {
        let mut c = cfg();
        c.horizon = 9_999.0 * c.dt;
        let p = generate(3, &c).unwrap();
        assert_eq!(p.len(), 10_000);
        let mean = p.t_out.iter().sum::<f64>() / p.len() as f64;
        assert!((mean - c.t_out_mean()).abs() < 0.01 * c.t_out_mean(), "mean {mean}");
    }

    #[test]
    fn generated_values_respect_clipping() {
        let c = cfg();
        let p = generate(11, &c).unwrap();
        let clip = c.clip_sigmas * c.t_out_noise;
        assert!(p.t_out.iter().all(|t| *t >= c.t_out_min - clip && *t <= c.t_out_max + clip));
        assert!(p.zeta.iter().flatten().all(|z| *z >= 0.0));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = cfg();
        c.t_out_min = 40.0;
        assert!(generate(0, &c).is_err());
        let mut c = cfg();
        c.load_rho = 1.0;
        assert!(generate(0, &c).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = generate(5, &cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        p.save_csv(&path).unwrap();
        let q = ScenarioProfile::load_csv(&path).unwrap();
        assert_eq!(q.t_out, p.t_out);
        assert_eq!(q.zeta, p.zeta);
        assert_eq!(q.dt, p.dt);
    }

    fn write(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::File::create(&path).unwrap().write_all(text.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn negative_load_rejected() {
        let (_d, path) = write("time_s,t_out_c,zeta_b01_kw\n0,30,10\n60,30,-1\n");
        match ScenarioProfile::load_csv(&path) {
            Err(Error::ScenarioParse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timestamp_gap_rejected_with_row() {
        let (_d, path) = write("time_s,t_out_c,zeta_b01_kw\n0,30,10\n60,30,10\n120,30,10\n240,30,10\n");
        match ScenarioProfile::load_csv(&path) {
            Err(Error::ScenarioParse { row, .. }) => assert_eq!(row, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_and_bad_header_rejected() {
        let (_d, path) = write("time_s,t_out_c,zeta_b01_kw\n0,NaN,10\n60,30,10\n");
        assert!(matches!(ScenarioProfile::load_csv(&path), Err(Error::ScenarioParse { row: 2, .. })));
        let (_d, path) = write("time,t_out_c,zeta_b01_kw\n0,30,10\n60,30,10\n");
        assert!(matches!(ScenarioProfile::load_csv(&path), Err(Error::ScenarioParse { row: 1, .. })));
        let (_d, path) = write("time_s,t_out_c,zeta_b01_kw\n0,30,10\n60,30,10\n30,30,10\n");
        assert!(matches!(ScenarioProfile::load_csv(&path), Err(Error::ScenarioParse { row: 4, .. })));
    }
}
