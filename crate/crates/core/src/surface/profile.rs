//! Profiles a(r) of convex surfaces of revolution with metric dr² + a(r)² dφ².

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::de::{self, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

const PROBE_POINTS: usize = 2049;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointKind {
    /// a vanishes linearly; the surface closes up on the axis.
    Pole,
    /// a stays positive; zero-flux (Neumann) condition.
    Boundary,
}

/// Natural cubic spline through (x_i, y_i).
#[derive(Clone, Debug)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::Profile("spline needs at least 3 samples".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Profile("spline abscissae must be strictly increasing".into()));
        }
        // Tridiagonal system for the interior second derivatives.
        let mut m = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
            c[i] = h1 / diag;
            d[i] = (rhs - h0 * d[i - 1]) / diag;
        }
        for i in (1..n - 1).rev() {
            m[i] = d[i] - c[i] * m[i + 1];
        }
        Ok(Self { x, y, m })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

#[derive(Clone)]
enum Shape {
    Sphere,
    Bumped(f64),
    Table(CubicSpline),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// Serializable description of a profile, as read from and written to JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct ProfileSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoints: Option<[EndpointKind; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Samples>,
}

/// Table of (r, a(r)) pairs, checked while parsing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Samples(pub Vec<(f64, f64)>);

impl<'de> Deserialize<'de> for Samples {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct SampleVisitor;
        impl<'de> Visitor<'de> for SampleVisitor {
            type Value = Samples;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an array of [r, a] pairs")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Samples, A::Error> {
                let mut out: Vec<(f64, f64)> = Vec::new();
                while let Some((r, a)) = seq.next_element::<(f64, f64)>()? {
                    let i = out.len();
                    if !r.is_finite() || !a.is_finite() {
                        return Err(de::Error::custom(format!("sample {i}: non-finite value")));
                    }
                    if a < 0.0 {
                        return Err(de::Error::custom(format!("sample {i}: negative a = {a}")));
                    }
                    if let Some(&(prev, _)) = out.last() {
                        if r <= prev {
                            return Err(de::Error::custom(format!(
                                "sample {i}: r = {r} does not increase (previous {prev})"
                            )));
                        }
                    }
                    out.push((r, a));
                }
                Ok(Samples(out))
            }
        }
        deserializer.deserialize_seq(SampleVisitor)
    }
}

/// 1-based line and column of the `index`-th element of the `samples` array.
fn sample_position(text: &str, index: usize) -> Option<(usize, usize)> {
    let key = text.find("\"samples\"")?;
    let open = key + text[key..].find('[')?;
    let mut depth = 0usize;
    let mut seen = 0usize;
    for (off, ch) in text[open..].char_indices() {
        match ch {
            '[' => {
                depth += 1;
                if depth == 2 {
                    if seen == index {
                        let at = open + off;
                        let line = text[..at].matches('\n').count() + 1;
                        let column = at - text[..at].rfind('\n').map_or(0, |p| p + 1) + 1;
                        return Some((line, column));
                    }
                    seen += 1;
                }
            }
            ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return None;
                }
            }
            _ => {}
        }
    }
    None
}

/// Profile of a convex surface of revolution on [r−, r+].
#[derive(Clone)]
pub struct SurfaceProfile {
    name: String,
    r_minus: f64,
    r_plus: f64,
    r0: f64,
    endpoints: [EndpointKind; 2],
    shape: Shape,
    spec: ProfileSpec,
}

impl fmt::Debug for SurfaceProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfaceProfile")
            .field("name", &self.name)
            .field("r_minus", &self.r_minus)
            .field("r_plus", &self.r_plus)
            .field("r0", &self.r0)
            .field("endpoints", &self.endpoints)
            .finish()
    }
}

impl SurfaceProfile {
    /// The unit sphere, a(r) = sin r on [0, π].
    pub fn sphere() -> Self {
        Self {
            name: "sphere".into(),
            r_minus: 0.0,
            r_plus: std::f64::consts::PI,
            r0: std::f64::consts::FRAC_PI_2,
            endpoints: [EndpointKind::Pole; 2],
            shape: Shape::Sphere,
            spec: ProfileSpec::builtin("sphere", None),
        }
    }

    /// a(r) = sin r · (1 + ε sin r) on [0, π]; convex for ε ≥ 0, maximum at π/2.
    pub fn bumped_sphere(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Profile(format!("epsilon {epsilon} outside [0, 1]")));
        }
        let p = Self {
            name: format!("bumped_sphere({epsilon})"),
            r_minus: 0.0,
            r_plus: std::f64::consts::PI,
            r0: std::f64::consts::FRAC_PI_2,
            endpoints: [EndpointKind::Pole; 2],
            shape: Shape::Bumped(epsilon),
            spec: ProfileSpec::builtin("bumped_sphere", Some(epsilon)),
        };
        p.validate()?;
        Ok(p)
    }

    /// A profile from an arbitrary function; r₀ is located numerically.
    pub fn from_fn<F>(
        name: &str,
        r_minus: f64,
        r_plus: f64,
        endpoints: [EndpointKind; 2],
        f: F,
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::build(name.into(), r_minus, r_plus, endpoints, Shape::Custom(Arc::new(f)), ProfileSpec {
            builtin: Some(name.into()),
            ..ProfileSpec::default()
        })
    }

    /// A profile interpolating tabulated samples with a natural cubic spline.
    pub fn from_table(
        r_minus: f64,
        r_plus: f64,
        endpoints: [EndpointKind; 2],
        samples: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let first = samples.first().map(|s| s.0);
        let last = samples.last().map(|s| s.0);
        if first != Some(r_minus) || last != Some(r_plus) {
            return Err(Error::Profile(
                "samples must start at r_minus and end at r_plus".into(),
            ));
        }
        let (x, y): (Vec<f64>, Vec<f64>) = samples.iter().copied().unzip();
        let spline = CubicSpline::new(x, y)?;
        let spec = ProfileSpec {
            r_minus: Some(r_minus),
            r_plus: Some(r_plus),
            endpoints: Some(endpoints),
            samples: Some(Samples(samples)),
            ..ProfileSpec::default()
        };
        Self::build("table".into(), r_minus, r_plus, endpoints, Shape::Table(spline), spec)
    }

    pub fn from_spec(spec: &ProfileSpec) -> Result<Self> {
        match spec.builtin.as_deref() {
            Some("sphere") => Ok(Self::sphere()),
            Some("bumped_sphere") => Self::bumped_sphere(spec.epsilon.unwrap_or(0.2)),
            Some(other) => Err(Error::Profile(format!("unknown builtin profile '{other}'"))),
            None => {
                let r_minus = spec.r_minus.ok_or_else(|| Error::Profile("missing r_minus".into()))?;
                let r_plus = spec.r_plus.ok_or_else(|| Error::Profile("missing r_plus".into()))?;
                let samples = spec
                    .samples
                    .as_ref()
                    .ok_or_else(|| Error::Profile("missing samples".into()))?;
                let endpoints = spec.endpoints.unwrap_or([EndpointKind::Pole; 2]);
                Self::from_table(r_minus, r_plus, endpoints, samples.0.clone())
            }
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: ProfileSpec = serde_json::from_str(text).map_err(|e| {
            let full = e.to_string();
            let msg = full.split(" at line ").next().unwrap_or(&full);
            // Sample errors are reported where the offending pair starts.
            let (line, column) = msg
                .strip_prefix("sample ")
                .and_then(|rest| rest.split(':').next()?.parse::<usize>().ok())
                .and_then(|i| sample_position(text, i))
                .unwrap_or((e.line(), e.column()));
            Error::Profile(format!("line {line} column {column}: {msg}"))
        })?;
        Self::from_spec(&spec)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
            .map_err(|e| Error::Profile(format!("{}: {e}", path.display())))
    }

    fn build(
        name: String,
        r_minus: f64,
        r_plus: f64,
        endpoints: [EndpointKind; 2],
        shape: Shape,
        spec: ProfileSpec,
    ) -> Result<Self> {
        if !(r_minus.is_finite() && r_plus.is_finite() && r_minus < r_plus) {
            return Err(Error::Profile(format!("invalid interval [{r_minus}, {r_plus}]")));
        }
        let mut p = Self { name, r_minus, r_plus, r0: 0.5 * (r_minus + r_plus), endpoints, shape, spec };
        p.r0 = p.locate_maximum()?;
        p.validate()?;
        Ok(p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &ProfileSpec {
        &self.spec
    }

    pub fn r_minus(&self) -> f64 {
        self.r_minus
    }

    pub fn r_plus(&self) -> f64 {
        self.r_plus
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn endpoints(&self) -> [EndpointKind; 2] {
        self.endpoints
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.shape, Shape::Sphere)
    }

    /// Distance-to-equator factor entering the preconditioner, given
    /// d = |r − r0|. This is d itself, except on the round sphere where it is
    /// |cos r| = sin d, which turns a^{1/3}|·|^{1/6} into |sin²θ cosθ|^{1/6}.
    pub fn equator_factor(&self, d: f64) -> f64 {
        match self.shape {
            Shape::Sphere => d.sin(),
            _ => d,
        }
    }

    /// The profile function a(r).
    pub fn a(&self, r: f64) -> f64 {
        match &self.shape {
            Shape::Sphere => r.sin(),
            Shape::Bumped(eps) => {
                let s = r.sin();
                s * (1.0 + eps * s)
            }
            Shape::Table(spline) => spline.eval(r),
            Shape::Custom(f) => f(r),
        }
    }

    fn probe(&self) -> Vec<(f64, f64)> {
        let len = self.r_plus - self.r_minus;
        (1..PROBE_POINTS - 1)
            .map(|i| {
                let r = self.r_minus + len * i as f64 / (PROBE_POINTS - 1) as f64;
                (r, self.a(r))
            })
            .collect()
    }

    fn locate_maximum(&self) -> Result<f64> {
        let probe = self.probe();
        let (i, _) = probe
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .ok_or_else(|| Error::Profile("empty probe grid".into()))?;
        let lo = if i == 0 { self.r_minus } else { probe[i - 1].0 };
        let hi = if i + 1 == probe.len() { self.r_plus } else { probe[i + 1].0 };
        // golden-section refinement
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (lo, hi);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        for _ in 0..200 {
            if self.a(c) > self.a(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - g * (b - a);
            d = a + g * (b - a);
            if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
                break;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Checks positivity, a single nondegenerate interior maximum and the
    /// endpoint behaviour on a probe grid.
    pub fn validate(&self) -> Result<()> {
        let probe = self.probe();
        if let Some(&(r, a)) = probe.iter().find(|p| !(p.1.is_finite() && p.1 > 0.0)) {
            return Err(Error::Profile(format!("a({r}) = {a} is not positive")));
        }
        let amax = probe.iter().map(|p| p.1).fold(0.0, f64::max);
        let tol = 1e-13 * amax;
        for w in probe.windows(2) {
            let rising = w[1].0 <= self.r0;
            let falling = w[0].0 >= self.r0;
            if rising && w[1].1 < w[0].1 - tol || falling && w[1].1 > w[0].1 + tol {
                return Err(Error::Profile(format!(
                    "a is not unimodal near r = {} (maximum at {})",
                    w[0].0, self.r0
                )));
            }
        }
        if !(self.r0 > self.r_minus && self.r0 < self.r_plus) {
            return Err(Error::Profile("maximum is not interior".into()));
        }
        let len = self.r_plus - self.r_minus;
        let dh = 1e-3 * len;
        let curv = self.a(self.r0 + dh) + self.a(self.r0 - dh) - 2.0 * self.a(self.r0);
        if !(curv < -1e-12 * amax) {
            return Err(Error::Profile(format!("maximum at r0 = {} is degenerate", self.r0)));
        }
        for (side, &kind) in self.endpoints.iter().enumerate() {
            let (end, inward) = if side == 0 { (self.r_minus, 1.0) } else { (self.r_plus, -1.0) };
            let value = self.a(end);
            match kind {
                EndpointKind::Pole => {
                    if value.abs() > 1e-10 * amax {
                        return Err(Error::Profile(format!("a({end}) = {value} but endpoint is a pole")));
                    }
                    let delta = 1e-6 * len;
                    let slope = (self.a(end + inward * delta) - value) / delta;
                    if !(slope > 1e-6 * amax / len) {
                        return Err(Error::Profile(format!("a does not vanish linearly at {end}")));
                    }
                }
                EndpointKind::Boundary => {
                    if !(value > 0.0) {
                        return Err(Error::Profile(format!("a({end}) = {value} on a boundary endpoint")));
                    }
                }
            }
        }
        Ok(())
    }
}

impl ProfileSpec {
    fn builtin(name: &str, epsilon: Option<f64>) -> Self {
        Self { builtin: Some(name.into()), epsilon, ..Self::default() }
    }
}
