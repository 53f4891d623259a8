//! The first N joint eigenpairs (λ, k) of a surface of revolution.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::profile::{ProfileSpec, SurfaceProfile};
use super::radial::{vectors_for, RadialEigenfunction, RadialOperator};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub lambda: f64,
    pub order: i64,
    pub radial_index: usize,
}

/// Eigenvalues sorted ascending, with the radial functions needed to
/// evaluate every listed mode. Modes for ±k share one radial function.
#[derive(Clone, Debug)]
pub struct SpectrumTable {
    pub profile: ProfileSpec,
    pub grid_points: usize,
    entries: Vec<SpectrumEntry>,
    modes: Vec<RadialEigenfunction>,
    lookup: HashMap<(u64, usize), usize>,
}

const MULTIPLET_TOL: f64 = 1e-8;

impl SpectrumTable {
    fn new(
        profile: ProfileSpec,
        grid_points: usize,
        entries: Vec<SpectrumEntry>,
        modes: Vec<RadialEigenfunction>,
    ) -> Self {
        let lookup = modes
            .iter()
            .enumerate()
            .map(|(i, m)| ((m.order.unsigned_abs(), m.radial_index), i))
            .collect();
        Self { profile, grid_points, entries, modes, lookup }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[SpectrumEntry] {
        &self.entries
    }

    /// Radial function of mode `j`, tagged with the mode's own order.
    pub fn radial(&self, j: usize) -> &RadialEigenfunction {
        let e = &self.entries[j];
        &self.modes[self.lookup[&(e.order.unsigned_abs(), e.radial_index)]]
    }

    /// ψ_j(r, φ).
    pub fn eval(&self, j: usize, r: f64, phi: f64) -> Result<Complex64> {
        let e = self.entries.get(j).ok_or_else(|| {
            Error::InvalidArgument(format!("mode {j} outside a table of {}", self.len()))
        })?;
        let u = self.radial(j).value_at(r)?;
        Ok(Complex64::from_polar(u / (2.0 * std::f64::consts::PI).sqrt(), e.order as f64 * phi))
    }

    /// Writes `<stem>.json` (table and metadata) and `<stem>.bin` (radial
    /// values as little-endian f64, modes in table order of `modes`).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let doc = SpectrumDoc {
            profile: self.profile.clone(),
            grid_points: self.grid_points,
            entries: self.entries.clone(),
            modes: self
                .modes
                .iter()
                .map(|m| ModeHeader {
                    order: m.order,
                    radial_index: m.radial_index,
                    eigenvalue: m.eigenvalue,
                    r_minus: m.r_minus,
                    r_plus: m.r_plus,
                    step: m.step,
                    len: m.values.len(),
                    endpoints: m.endpoints,
                })
                .collect(),
        };
        let mut f = BufWriter::new(File::create(dir.join(format!("{stem}.json")))?);
        serde_json::to_writer_pretty(&mut f, &doc)?;
        f.flush()?;
        let mut b = BufWriter::new(File::create(dir.join(format!("{stem}.bin")))?);
        for m in &self.modes {
            for v in &m.values {
                b.write_all(&v.to_le_bytes())?;
            }
        }
        b.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let doc: SpectrumDoc =
            serde_json::from_reader(BufReader::new(File::open(dir.join(format!("{stem}.json")))?))?;
        let mut raw = Vec::new();
        BufReader::new(File::open(dir.join(format!("{stem}.bin")))?).read_to_end(&mut raw)?;
        let total: usize = doc.modes.iter().map(|m| m.len).sum();
        if raw.len() != total * 8 {
            return Err(Error::Format(format!(
                "mode file holds {} bytes, header promises {}",
                raw.len(),
                total * 8
            )));
        }
        let mut values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let modes = doc
            .modes
            .iter()
            .map(|h| RadialEigenfunction {
                order: h.order,
                eigenvalue: h.eigenvalue,
                radial_index: h.radial_index,
                r_minus: h.r_minus,
                r_plus: h.r_plus,
                step: h.step,
                values: values.by_ref().take(h.len).collect(),
                endpoints: h.endpoints,
            })
            .collect();
        let table = Self::new(doc.profile, doc.grid_points, doc.entries, modes);
        for e in &table.entries {
            if !table.lookup.contains_key(&(e.order.unsigned_abs(), e.radial_index)) {
                return Err(Error::Format(format!("no radial data for mode {e:?}")));
            }
        }
        Ok(table)
    }
}

#[derive(Serialize, Deserialize)]
struct ModeHeader {
    order: i64,
    radial_index: usize,
    eigenvalue: f64,
    r_minus: f64,
    r_plus: f64,
    step: f64,
    len: usize,
    endpoints: [super::profile::EndpointKind; 2],
}

#[derive(Serialize, Deserialize)]
struct SpectrumDoc {
    profile: ProfileSpec,
    grid_points: usize,
    entries: Vec<SpectrumEntry>,
    modes: Vec<ModeHeader>,
}

fn nth_smallest(values: &mut [f64], n: usize) -> f64 {
    values.sort_by(f64::total_cmp);
    values[n - 1]
}

/// Orders entries by λ, treating values within a relative 1e-8 as one
/// multiplet ordered by |k| and then k > 0 before k < 0.
fn sort_entries(entries: &mut Vec<SpectrumEntry>) {
    entries.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut out = Vec::with_capacity(entries.len());
    let mut i = 0;
    while i < entries.len() {
        let head = entries[i].lambda;
        let mut j = i + 1;
        while j < entries.len()
            && (entries[j].lambda - head).abs() <= MULTIPLET_TOL * head.abs().max(1.0)
        {
            j += 1;
        }
        let mut group = entries[i..j].to_vec();
        group.sort_by_key(|e| (e.order.unsigned_abs(), e.order < 0, e.radial_index));
        out.extend(group);
        i = j;
    }
    *entries = out;
}

/// The N smallest joint eigenvalues of the surface, enumerating k = 0, ±1, …
/// until the lowest eigenvalue at order k exceeds the current N-th smallest.
pub fn build_spectrum(profile: &SurfaceProfile, n: usize, grid_points: usize) -> Result<SpectrumTable> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if n > grid_points / 4 {
        return Err(Error::InvalidArgument(format!(
            "N = {n} exceeds the resolution of a {grid_points}-point grid"
        )));
    }
    profile.validate()?;

    // Eigenvalues only; eigenvectors are computed for the selected modes.
    let mut per_order: Vec<(RadialOperator, super::tridiag::SymTridiagonal, Vec<f64>)> = Vec::new();
    let op0 = RadialOperator::new(profile, 0, grid_points)?;
    let sym0 = op0.symmetric()?;
    let vals0 = sym0.lowest(n)?;
    let mut pool: Vec<f64> = vals0.clone();
    let mut threshold = nth_smallest(&mut pool.clone(), n);
    per_order.push((op0, sym0, vals0));
    for k in 1i64.. {
        let op = RadialOperator::new(profile, k, grid_points)?;
        let sym = op.symmetric()?;
        let lowest = sym.eigenvalue(0)?;
        if lowest > threshold {
            break;
        }
        let vals = sym.below(threshold * (1.0 + 1e-12) + 1e-300)?;
        pool.extend(vals.iter().flat_map(|&v| [v, v]));
        threshold = nth_smallest(&mut pool.clone(), n);
        per_order.push((op, sym, vals));
    }

    let mut candidates: Vec<SpectrumEntry> = Vec::new();
    for (k, (_, _, vals)) in per_order.iter().enumerate() {
        for (i, &lambda) in vals.iter().enumerate() {
            let k = k as i64;
            candidates.push(SpectrumEntry { lambda, order: k, radial_index: i });
            if k > 0 {
                candidates.push(SpectrumEntry { lambda, order: -k, radial_index: i });
            }
        }
    }
    sort_entries(&mut candidates);
    candidates.truncate(n);

    // radial indices needed per |k|
    let mut needed: Vec<usize> = vec![0; per_order.len()];
    for e in &candidates {
        let k = e.order.unsigned_abs() as usize;
        needed[k] = needed[k].max(e.radial_index + 1);
    }
    let modes: Vec<Vec<RadialEigenfunction>> = per_order
        .par_iter()
        .enumerate()
        .filter(|(k, _)| needed[*k] > 0)
        .map(|(k, (op, sym, vals))| vectors_for(op, sym, profile, k as i64, &vals[..needed[k]]))
        .collect::<Result<_>>()?;
    let modes: Vec<RadialEigenfunction> = modes.into_iter().flatten().collect();

    // Report the refined Rayleigh-quotient eigenvalues.
    let refined: HashMap<(u64, usize), f64> = modes
        .iter()
        .map(|m| ((m.order.unsigned_abs(), m.radial_index), m.eigenvalue))
        .collect();
    for e in candidates.iter_mut() {
        e.lambda = refined[&(e.order.unsigned_abs(), e.radial_index)];
    }
    sort_entries(&mut candidates);
    Ok(SpectrumTable::new(profile.spec().clone(), grid_points, candidates, modes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_lowest_sphere_modes() {
        let t = build_spectrum(&SurfaceProfile::sphere(), 4, 4000).unwrap();
        let lam: Vec<f64> = t.entries().iter().map(|e| e.lambda).collect();
        assert!(lam[0].abs() < 1e-9);
        for l in &lam[1..] {
            assert!((l - 2.0).abs() < 2e-3);
        }
        let mut ks: Vec<i64> = t.entries().iter().map(|e| e.order).collect();
        ks.sort();
        assert_eq!(ks, vec![-1, 0, 0, 1]);
        // ±k pairs are exact ties and keep k > 0 first
        let pos = t.entries().iter().position(|e| e.order == 1).unwrap();
        assert_eq!(t.entries()[pos + 1].order, -1);
    }

    #[test]
    fn single_mode() {
        let t = build_spectrum(&SurfaceProfile::sphere(), 1, 1000).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.entries()[0].order, 0);
        assert!(t.entries()[0].lambda.abs() < 1e-9);
        let v = t.eval(0, 0.3, 2.0).unwrap();
        let c = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        assert!((v.re - c).abs() < 1e-5 * c);
    }

    #[test]
    fn save_and_load() {
        let t = build_spectrum(&SurfaceProfile::bumped_sphere(0.2).unwrap(), 9, 600).unwrap();
        let dir = tempfile::tempdir().unwrap();
        t.save(dir.path(), "spec").unwrap();
        let u = SpectrumTable::load(dir.path(), "spec").unwrap();
        assert_eq!(t.entries(), u.entries());
        for j in 0..t.len() {
            assert_eq!(t.eval(j, 1.1, 0.4).unwrap(), u.eval(j, 1.1, 0.4).unwrap());
        }
        std::fs::write(dir.path().join("spec.bin"), [0u8; 8]).unwrap();
        assert!(SpectrumTable::load(dir.path(), "spec").is_err());
    }
}
