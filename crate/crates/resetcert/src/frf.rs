//! Frequency-response tables: CSV ingestion, interpolation and loop composition.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::lti::{Poly, RationalTf};
use crate::scalar::{cabs, carg};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrfFormat {
    /// `freq_hz,real,imag`
    #[default]
    Complex,
    /// `freq_hz,mag_db,phase_deg`
    Magphase,
}

/// Sampled frequency response on a strictly increasing positive grid (rad/s).
#[derive(Clone, Debug, PartialEq)]
pub struct FrfTable<T> {
    freqs: Vec<T>,
    values: Vec<Complex<T>>,
    log_mag: Vec<T>,
    phase: Vec<T>,
}

impl<T: Real> FrfTable<T> {
    pub fn new(freqs: Vec<T>, values: Vec<Complex<T>>) -> Result<Self> {
        if freqs.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frequencies, {} values",
                freqs.len(),
                values.len()
            )));
        }
        if freqs.len() < 2 {
            return Err(Error::EmptyTable);
        }
        for (k, w) in freqs.iter().enumerate() {
            if !(*w > T::zero()) || (k > 0 && !(*w > freqs[k - 1])) {
                return Err(Error::NonMonotoneFrequency { line: k + 1 });
            }
        }
        let log_mag = values.iter().map(|v| cabs(*v).ln()).collect();
        let phase = unwrap(values.iter().map(|v| carg(*v)));
        Ok(FrfTable {
            freqs,
            values,
            log_mag,
            phase,
        })
    }

    /// Samples a rational response on `grid`.
    pub fn from_tf(tf: &RationalTf<T>, grid: &[T]) -> Result<Self> {
        let values = grid.iter().map(|&w| tf.eval(w)).collect::<Result<Vec<_>>>()?;
        Self::new(grid.to_vec(), values)
    }

    pub fn freqs(&self) -> &[T] {
        &self.freqs
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn band(&self) -> (T, T) {
        (self.freqs[0], self.freqs[self.freqs.len() - 1])
    }

    /// Log-frequency linear interpolation of log-magnitude and unwrapped
    /// phase. Exact at the nodes.
    pub fn interpolate(&self, omega: T) -> Result<Complex<T>> {
        let (lo, hi) = self.band();
        if !(omega >= lo && omega <= hi) {
            return Err(Error::OutOfBand {
                omega: omega.f64(),
                lo: lo.f64(),
                hi: hi.f64(),
            });
        }
        let k = self.freqs.partition_point(|&w| w < omega);
        if self.freqs[k] == omega {
            return Ok(self.values[k]);
        }
        let (a, b) = (k - 1, k);
        let t = (omega.ln() - self.freqs[a].ln()) / (self.freqs[b].ln() - self.freqs[a].ln());
        if !self.log_mag[a].is_finite() || !self.log_mag[b].is_finite() {
            return Ok(self.values[a] + (self.values[b] - self.values[a]) * t);
        }
        let m = (self.log_mag[a] + (self.log_mag[b] - self.log_mag[a]) * t).exp();
        let p = self.phase[a] + (self.phase[b] - self.phase[a]) * t;
        Ok(Complex::new(m * p.cos(), m * p.sin()))
    }

    /// Replaces the plant near each band edge by `K s^p`, with `K` matched
    /// to the edge sample. Used only for the asymptotic limit checks.
    pub fn asymptotic_models(&self, spec: AsymptoteSpec) -> Result<(RationalTf<T>, RationalTf<T>)> {
        let (lo, hi) = self.band();
        let n = self.len();
        Ok((
            monomial_fit(lo, self.values[0], spec.low)?,
            monomial_fit(hi, self.values[n - 1], spec.high)?,
        ))
    }
}

/// Integer slopes (powers of `s`) of the plant below and above the band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsymptoteSpec {
    pub low: i32,
    pub high: i32,
}

impl std::str::FromStr for AsymptoteSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let parse = |x: &str| {
            x.parse::<i32>()
                .map_err(|e| Error::Config(format!("asymptote slope '{x}': {e}")))
        };
        match parts.as_slice() {
            [a, b] => Ok(AsymptoteSpec {
                low: parse(a)?,
                high: parse(b)?,
            }),
            _ => Err(Error::Config(format!("expected 'low,high', got '{s}'"))),
        }
    }
}

fn monomial_fit<T: Real>(omega: T, value: Complex<T>, p: i32) -> Result<RationalTf<T>> {
    // (j omega)^p
    let mut jw = Complex::new(T::one(), T::zero());
    let base = Complex::new(T::zero(), omega);
    for _ in 0..p.unsigned_abs() {
        jw *= base;
    }
    let ratio = if p >= 0 { value / jw } else { value * jw };
    let k = if ratio.re >= T::zero() { cabs(ratio) } else { -cabs(ratio) };
    let mono = Poly::s().pow(p.unsigned_abs() as usize);
    if p >= 0 {
        RationalTf::new(mono.scale(k), Poly::one())
    } else {
        RationalTf::new(Poly::constant(k), mono)
    }
}

fn unwrap<T: Real>(angles: impl Iterator<Item = T>) -> Vec<T> {
    let pi = T::pi();
    let tau = T::two_pi();
    let mut out: Vec<T> = Vec::new();
    for a in angles {
        match out.last() {
            None => out.push(a),
            Some(&prev) => {
                let mut d = a - prev;
                while d > pi {
                    d -= tau;
                }
                while d < -pi {
                    d += tau;
                }
                out.push(prev + d);
            }
        }
    }
    out
}

/// Reads a CSV table; frequencies in Hz, returned in rad/s.
pub fn load_frf<T: Real>(path: impl AsRef<Path>, format: FrfFormat) -> Result<FrfTable<T>> {
    let file = File::open(path)?;
    read_frf(file, format)
}

pub fn read_frf<T: Real, R: Read>(reader: R, format: FrfFormat) -> Result<FrfTable<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut freqs = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 columns, found {}", rec.len()),
            });
        }
        let mut cols = [0.0f64; 3];
        for (i, field) in rec.iter().enumerate() {
            cols[i] = field.parse().map_err(|e| Error::Parse {
                line,
                msg: format!("column {}: '{field}': {e}", i + 1),
            })?;
        }
        let hz = cols[0];
        if !(hz > 0.0) || freqs.last().is_some_and(|&w: &T| !(hz_to_rad::<T>(hz) > w)) {
            return Err(Error::NonMonotoneFrequency { line });
        }
        let v = match format {
            FrfFormat::Complex => Complex::new(T::c(cols[1]), T::c(cols[2])),
            FrfFormat::Magphase => {
                let mag = 10f64.powf(cols[1] / 20.0);
                let ph = cols[2].to_radians();
                Complex::new(T::c(mag * ph.cos()), T::c(mag * ph.sin()))
            }
        };
        freqs.push(hz_to_rad(hz));
        values.push(v);
    }
    if freqs.len() < 2 {
        return Err(Error::EmptyTable);
    }
    FrfTable::new(freqs, values)
}

fn hz_to_rad<T: Real>(hz: f64) -> T {
    T::c(hz) * T::two_pi()
}

/// Hz value that maps back to exactly `omega` under `hz_to_rad`, when one
/// exists within a few ulps of `omega / 2 pi`. Frequencies that were read
/// from a file always have one.
fn rad_to_hz(omega: f64) -> f64 {
    let base = omega / std::f64::consts::TAU;
    if hz_to_rad::<f64>(base) == omega {
        return base;
    }
    let mut up = base;
    let mut down = base;
    for _ in 0..8 {
        up = up.next_up();
        down = down.next_down();
        if hz_to_rad::<f64>(up) == omega {
            return up;
        }
        if hz_to_rad::<f64>(down) == omega {
            return down;
        }
    }
    base
}

/// Writes the complex format.
pub fn write_frf<T: Real, W: Write>(table: &FrfTable<T>, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "# freq_hz,real,imag")?;
    for (f, v) in table.freqs.iter().zip(&table.values) {
        writeln!(w, "{},{},{}", rad_to_hz(f.f64()), v.re.f64(), v.im.f64())?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_frf<T: Real>(table: &FrfTable<T>, path: impl AsRef<Path>) -> Result<()> {
    write_frf(table, File::create(path)?)
}

/// Log-spaced grid with exact endpoints.
pub fn log_space<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<T> = (0..n)
        .map(|k| (a + (b - a) * T::c(k as f64) / T::c((n - 1) as f64)).exp())
        .collect();
    g[0] = lo;
    g[n - 1] = hi;
    g
}

/// Loop responses at one frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopSample<T> {
    pub omega: T,
    /// `C_L1 C_R C_L2 G`
    pub l: Complex<T>,
    pub c_s: Complex<T>,
    pub c_r: Complex<T>,
}

#[derive(Clone, Debug)]
pub enum Plant<T: Real> {
    Rational(RationalTf<T>),
    Measured(FrfTable<T>),
}

impl<T: Real> Plant<T> {
    pub fn response(&self, omega: T) -> Result<Complex<T>> {
        match self {
            Plant::Rational(g) => g.eval(omega),
            Plant::Measured(t) => t.interpolate(omega),
        }
    }
}

/// Controller blocks around the plant.
#[derive(Clone, Debug)]
pub struct ControllerBlocks<T: Real> {
    pub c_l1: RationalTf<T>,
    pub c_r: RationalTf<T>,
    pub c_l2: RationalTf<T>,
    pub c_s: RationalTf<T>,
}

impl<T: Real> ControllerBlocks<T> {
    pub fn with_reset(c_r: RationalTf<T>) -> Self {
        ControllerBlocks {
            c_l1: RationalTf::one(),
            c_r,
            c_l2: RationalTf::one(),
            c_s: RationalTf::one(),
        }
    }

    /// `C_L1 C_R C_L2`
    pub fn controller(&self) -> RationalTf<T> {
        self.c_l1.series(&self.c_r).series(&self.c_l2)
    }
}

/// Per-frequency `{L, C_s, C_R}`.
///
/// With a rational plant the whole loop is multiplied out first, so any
/// redistribution of factors with the same product gives identical samples
/// whenever the polynomial products are exact.
pub fn compose_loop<T: Real>(plant: &Plant<T>, blocks: &ControllerBlocks<T>, grid: &[T]) -> Result<Vec<LoopSample<T>>> {
    let ctrl = blocks.controller();
    let full = match plant {
        Plant::Rational(g) => Some(ctrl.series(g)),
        Plant::Measured(_) => None,
    };
    grid.iter()
        .map(|&w| {
            let l = match (&full, plant) {
                (Some(l), _) => l.eval(w)?,
                (None, p) => ctrl.eval(w)? * p.response(w)?,
            };
            Ok(LoopSample {
                omega: w,
                l,
                c_s: blocks.c_s.eval(w)?,
                c_r: blocks.c_r.eval(w)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_format() {
        let t: FrfTable<f64> = read_frf("1.0,1.0,0.0\n2.0,0.5,0.0".as_bytes(), FrfFormat::Complex).unwrap();
        assert_eq!(t.freqs(), &[std::f64::consts::TAU, 2.0 * std::f64::consts::TAU]);
        assert_eq!(t.values()[1], Complex::new(0.5, 0.0));
    }

    #[test]
    fn magphase_format() {
        let t: FrfTable<f64> =
            read_frf("# header\n1.0,0.0,0.0\n2.0,-6.0206,-90.0\n".as_bytes(), FrfFormat::Magphase).unwrap();
        assert_eq!(t.values()[0], Complex::new(1.0, 0.0));
        assert!((t.values()[1] - Complex::new(0.0, -0.5)).norm() < 1e-5);
    }

    #[test]
    fn malformed_input() {
        let bad = read_frf::<f64, _>("1.0,1.0\n2.0,1.0,0.0".as_bytes(), FrfFormat::Complex);
        assert!(matches!(bad, Err(Error::Parse { line: 1, .. })));
        let bad = read_frf::<f64, _>("1.0,1.0,x\n2.0,1.0,0.0".as_bytes(), FrfFormat::Complex);
        assert!(matches!(bad, Err(Error::Parse { .. })));
        let bad = read_frf::<f64, _>("2.0,1.0,0.0\n1.0,1.0,0.0".as_bytes(), FrfFormat::Complex);
        assert!(matches!(bad, Err(Error::NonMonotoneFrequency { line: 2 })));
        let bad = read_frf::<f64, _>("# only\n1.0,1.0,0.0".as_bytes(), FrfFormat::Complex);
        assert!(matches!(bad, Err(Error::EmptyTable)));
    }

    #[test]
    fn interpolation() {
        let t = FrfTable::new(vec![1.0, 100.0], vec![Complex::new(1.0, 0.0), Complex::new(0.01, 0.0)]).unwrap();
        assert!((t.interpolate(10.0).unwrap() - Complex::new(0.1, 0.0)).norm() < 1e-15);
        assert_eq!(t.interpolate(100.0).unwrap(), Complex::new(0.01, 0.0));
        assert!(matches!(t.interpolate(200.0), Err(Error::OutOfBand { .. })));
    }

    #[test]
    fn phase_unwrap_goes_through_180() {
        let a = (-179f64).to_radians();
        let b = 179f64.to_radians();
        let t = FrfTable::new(
            vec![1.0, 4.0],
            vec![Complex::from_polar(1.0, a), Complex::from_polar(1.0, b)],
        )
        .unwrap();
        let mid = t.interpolate(2.0).unwrap();
        assert!(mid.re < -0.999, "{mid}");
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let g = RationalTf::from_f64(&[1.0], &[1.0, 0.3, 0.02]).unwrap();
        let t = FrfTable::from_tf(&g, &log_space(0.01, 1000.0, 500)).unwrap();
        let mut buf = Vec::new();
        write_frf(&t, &mut buf).unwrap();
        let first: FrfTable<f64> = read_frf(buf.as_slice(), FrfFormat::Complex).unwrap();
        let mut again = Vec::new();
        write_frf(&first, &mut again).unwrap();
        let second: FrfTable<f64> = read_frf(again.as_slice(), FrfFormat::Complex).unwrap();
        assert_eq!(second.freqs(), first.freqs());
        assert_eq!(second.values(), first.values());
        assert_eq!(first.values(), t.values());
    }

    #[test]
    fn compose_examples() {
        let flat = FrfTable::new(vec![0.1, 10.0], vec![Complex::new(1.0, 0.0); 2]).unwrap();
        let gfore = RationalTf::from_f64(&[1.0], &[1.0, 1.0]).unwrap();
        let s = compose_loop(&Plant::Measured(flat), &ControllerBlocks::with_reset(gfore), &[1.0]).unwrap();
        assert_eq!(s[0].l, Complex::new(0.5, -0.5));
        let g = RationalTf::from_f64(&[1.0], &[1.0, 2.0, 1.0]).unwrap();
        let s = compose_loop(
            &Plant::Rational(g.clone()),
            &ControllerBlocks::with_reset(RationalTf::one()),
            &[0.5, 3.0],
        )
        .unwrap();
        assert_eq!(s[1].l, g.eval(3.0).unwrap());
    }

    #[test]
    fn asymptote_fit() {
        let g = RationalTf::<f64>::from_f64(&[2.0], &[0.0, 1.0, 1.0]).unwrap();
        let t = FrfTable::from_tf(&g, &log_space(1e-3, 1e3, 200)).unwrap();
        let (lo, hi) = t.asymptotic_models(AsymptoteSpec { low: -1, high: -2 }).unwrap();
        assert_eq!(lo.origin_poles(), 1);
        assert!((lo.high_frequency_gain() - 2.0).abs() < 1e-2);
        assert_eq!(hi.relative_degree(), 2);
        assert!((hi.high_frequency_gain() - 2.0).abs() < 1e-2);
    }
}
