//! Ordered event times of a single detection channel.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing event times (s) within `[0, duration]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimestampStream {
    pub channel: String,
    times: Vec<f64>,
    pub duration: f64,
}

impl TimestampStream {
    pub fn new(channel: impl Into<String>, times: Vec<f64>, duration: f64) -> Result<Self> {
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(Error::param("duration", "must be finite and >= 0"));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::Format(format!(
                "event times not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
            if first < 0.0 || last > duration {
                return Err(Error::Format(format!(
                    "event times outside [0, {duration}]"
                )));
            }
        }
        Ok(Self {
            channel: channel.into(),
            times,
            duration,
        })
    }

    /// Sort, drop events outside `[0, duration]` and collapse exact
    /// duplicates.
    pub fn from_unsorted(channel: impl Into<String>, mut times: Vec<f64>, duration: f64) -> Self {
        times.retain(|t| (0.0..=duration).contains(t));
        times.sort_by(f64::total_cmp);
        times.dedup();
        Self {
            channel: channel.into(),
            times,
            duration,
        }
    }

    pub fn empty(channel: impl Into<String>, duration: f64) -> Self {
        Self {
            channel: channel.into(),
            times: Vec::new(),
            duration,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn into_times(self) -> Vec<f64> {
        self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean event rate over the stream duration.
    pub fn rate(&self) -> f64 {
        if self.duration > 0.0 {
            self.len() as f64 / self.duration
        } else {
            0.0
        }
    }

    /// Sorted union. Exact coincidences collapse to one event.
    pub fn merge(&self, other: &TimestampStream, channel: impl Into<String>) -> Self {
        let (a, b) = (&self.times, &other.times);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let next = if j >= b.len() || (i < a.len() && a[i] <= b[j]) {
                i += 1;
                a[i - 1]
            } else {
                j += 1;
                b[j - 1]
            };
            if out.last() != Some(&next) {
                out.push(next);
            }
        }
        Self {
            channel: channel.into(),
            times: out,
            duration: self.duration.max(other.duration),
        }
    }

    /// One time per row, seconds, 12 significant digits, with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time_s")?;
        for t in &self.times {
            writeln!(w, "{t:.11e}")?;
        }
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv). Rows may collapse when
    /// two events are closer than the printed precision.
    pub fn read_csv<R: BufRead>(r: R, channel: &str, duration: f64) -> Result<Self> {
        let mut times = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (n == 0 && line == "time_s") {
                continue;
            }
            let t: f64 = line
                .parse()
                .map_err(|_| Error::Format(format!("line {}: `{line}` is not a number", n + 1)))?;
            times.push(t);
        }
        Ok(Self::from_unsorted(channel, times, duration))
    }

    /// Little-endian framing: `u64` event count, `f64` duration, then the
    /// event times as `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.times.len() as u64).to_le_bytes())?;
        w.write_all(&self.duration.to_le_bytes())?;
        for t in &self.times {
            w.write_all(&t.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R, channel: &str) -> Result<Self> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let duration = f64::from_le_bytes(b8);
        let mut times = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            times.push(f64::from_le_bytes(b8));
        }
        Self::new(channel, times, duration)
    }
}
