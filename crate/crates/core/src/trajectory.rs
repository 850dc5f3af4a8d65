//! Time-stamped state sequences and their CSV form.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// States stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    data: Vec<f64>,
    pub names: Vec<String>,
}

impl Trajectory {
    pub fn new(dim: usize, names: Vec<String>) -> Self {
        assert_eq!(names.len(), dim);
        Self { dim, times: Vec::new(), data: Vec::new(), names }
    }

    pub fn with_default_names(dim: usize) -> Self {
        Self::new(dim, (0..dim).map(|i| format!("u{i}")).collect())
    }

    /// Build from parallel time and state columns.
    pub fn from_rows(times: Vec<f64>, states: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        let dim = names.len();
        if times.len() != states.len() {
            return Err(Error::InvalidArgument("times and states differ in length".into()));
        }
        let mut tr = Self::new(dim, names);
        for (t, s) in times.into_iter().zip(states) {
            tr.push(t, s)?;
        }
        Ok(tr)
    }

    /// Append a sample; times must increase strictly.
    pub fn push(&mut self, t: f64, state: &[f64]) -> Result<()> {
        if state.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: state.len() });
        }
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::InvalidArgument(format!("time {t} does not follow {last}")));
            }
        }
        self.times.push(t);
        self.data.extend_from_slice(state);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn first_time(&self) -> f64 {
        self.times[0]
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn component(&self, j: usize) -> Vec<f64> {
        self.states().map(|s| s[j]).collect()
    }

    /// Map every state through `f`, keeping the time stamps.
    pub fn map<F: FnMut(&[f64]) -> Vec<f64>>(&self, names: Vec<String>, mut f: F) -> Result<Trajectory> {
        let mut out = Trajectory::new(names.len(), names);
        for (i, s) in self.states().enumerate() {
            out.push(self.times[i], &f(s))?;
        }
        Ok(out)
    }

    /// Linear interpolation in time; clamps outside the recorded span.
    pub fn sample(&self, t: f64) -> Vec<f64> {
        let n = self.len();
        if t <= self.times[0] {
            return self.state(0).to_vec();
        }
        if t >= self.times[n - 1] {
            return self.state(n - 1).to_vec();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.state(k).iter().zip(self.state(k + 1)).map(|(a, b)| a + w * (b - a)).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t")?;
        for n in &self.names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        let mut line = String::new();
        for (i, s) in self.states().enumerate() {
            line.clear();
            line.push_str(&fmt_sci(self.times[i]));
            for v in s {
                line.push(',');
                line.push_str(&fmt_sci(*v));
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Trajectory> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty csv".into()))??;
        let mut cols = header.split(',');
        if cols.next() != Some("t") {
            return Err(Error::Format("first column must be `t`".into()));
        }
        let names: Vec<String> = cols.map(str::to_string).collect();
        let mut tr = Trajectory::new(names.len(), names);
        let mut row = Vec::with_capacity(tr.dim);
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            row.clear();
            for tok in line.split(',') {
                row.push(tok.parse::<f64>().map_err(|e| Error::Format(format!("line {}: {e}", ln + 2)))?);
            }
            if row.len() != tr.dim + 1 {
                return Err(Error::Format(format!("line {}: expected {} fields", ln + 2, tr.dim + 1)));
            }
            tr.push(row[0], &row[1..])?;
        }
        Ok(tr)
    }
}

/// C-style `%.12e`: twelve mantissa digits, signed exponent of at least two digits.
pub fn fmt_sci(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.12e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sci_format_matches_printf() {
        assert_eq!(fmt_sci(1.0), "1.000000000000e+00");
        assert_eq!(fmt_sci(-0.00123), "-1.230000000000e-03");
        assert_eq!(fmt_sci(0.0), "0.000000000000e+00");
        assert_eq!(fmt_sci(6.02e123), "6.020000000000e+123");
    }

    #[test]
    fn csv_round_trip() {
        let names = vec!["x".to_string(), "y".to_string()];
        let tr = Trajectory::from_rows(vec![0.0, 0.5], &[vec![1.0, -2.0], vec![3.25, 1e-7]], names).unwrap();
        let s = tr.to_csv_string();
        assert!(s.starts_with("t,x,y\n0.000000000000e+00,1.000000000000e+00,"));
        assert!(!s.contains('\r'));
        let back = Trajectory::read_csv(s.as_bytes()).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn times_must_increase() {
        let mut tr = Trajectory::with_default_names(1);
        tr.push(1.0, &[0.0]).unwrap();
        assert!(tr.push(1.0, &[0.0]).is_err());
        assert!(tr.push(2.0, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn sample_interpolates() {
        let tr = Trajectory::from_rows(vec![0.0, 2.0], &[vec![0.0], vec![4.0]], vec!["a".into()]).unwrap();
        assert_eq!(tr.sample(0.5), vec![1.0]);
        assert_eq!(tr.sample(9.0), vec![4.0]);
    }
}
