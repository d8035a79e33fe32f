//! Standalone SVG scatter plots of sample logs in objective space.

use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::SampleRecord;

pub const DENSITY_BINS: usize = 64;
const PANEL: f64 = 320.0;
const MARGIN: f64 = 36.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coloring {
    /// Hue from the angle of the conditioning payload.
    Angle,
    /// Brightness from the sample count of the point's bin.
    Density,
}

impl Coloring {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "angle" => Some(Coloring::Angle),
            "density" => Some(Coloring::Density),
            _ => None,
        }
    }
}

pub type Rgb = (u8, u8, u8);

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let m = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    (m(a.0, b.0), m(a.1, b.1), m(a.2, b.2))
}

pub const RAMP_START: Rgb = (0, 0, 255);
const RAMP_MID: Rgb = (255, 0, 0);
pub const RAMP_END: Rgb = (0, 160, 0);

/// Blue → red → green ramp over `t` in [0, 1].
pub fn brg_ramp(t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0);
    if t <= 0.5 {
        lerp(RAMP_START, RAMP_MID, t * 2.0)
    } else {
        lerp(RAMP_MID, RAMP_END, t * 2.0 - 1.0)
    }
}

/// Ramp color of the payload's angle in the (i, j) plane: `(1, 0)` maps to
/// the start of the ramp and `(0, 1)` to its end.
pub fn angle_color(payload: &[f64], i: usize, j: usize) -> Rgb {
    let angle = payload[j].atan2(payload[i]);
    brg_ramp(angle / std::f64::consts::FRAC_PI_2)
}

fn bin_of(x: f64) -> usize {
    ((x.clamp(0.0, 1.0) * DENSITY_BINS as f64) as usize).min(DENSITY_BINS - 1)
}

/// Row-major `64 × 64` counts of `(x, y)` points in the unit square; row is
/// the `y` bin.
pub fn density_bins(points: impl IntoIterator<Item = (f64, f64)>) -> Vec<u64> {
    let mut bins = vec![0u64; DENSITY_BINS * DENSITY_BINS];
    for (x, y) in points {
        bins[bin_of(y) * DENSITY_BINS + bin_of(x)] += 1;
    }
    bins
}

fn density_color(count: u64, max: u64) -> Rgb {
    let t = if max == 0 { 0.0 } else { (count as f64 / max as f64).sqrt() };
    lerp((40, 10, 80), (255, 230, 60), t)
}

fn panel(out: &mut String, records: &[SampleRecord], i: usize, j: usize, ox: f64, oy: f64, coloring: Coloring) {
    let sx = |x: f64| ox + x.clamp(0.0, 1.0) * PANEL;
    let sy = |y: f64| oy + (1.0 - y.clamp(0.0, 1.0)) * PANEL;
    let _ = writeln!(
        out,
        r##"<rect x="{ox}" y="{oy}" width="{PANEL}" height="{PANEL}" fill="#fafafa" stroke="#333"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">r{}</text>"#,
        ox + PANEL / 2.0,
        oy + PANEL + 20.0,
        i + 1
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 {} {})">r{}</text>"#,
        ox - 14.0,
        oy + PANEL / 2.0,
        ox - 14.0,
        oy + PANEL / 2.0,
        j + 1
    );
    let bins = density_bins(records.iter().map(|r| (r.r[i], r.r[j])));
    let max = bins.iter().copied().max().unwrap_or(0);
    for rec in records {
        let (x, y) = (rec.r[i], rec.r[j]);
        let (cr, cg, cb) = match coloring {
            Coloring::Angle => angle_color(&rec.conditioning, i, j),
            Coloring::Density => density_color(bins[bin_of(y) * DENSITY_BINS + bin_of(x)], max),
        };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="rgb({cr},{cg},{cb})" fill-opacity="0.6"/>"#,
            sx(x),
            sy(y)
        );
    }
}

/// Renders a sample log. Two objectives give one panel; more give a K × K
/// layout with one panel per ordered pair and labels on the diagonal.
pub fn scatter_svg(records: &[SampleRecord], coloring: Coloring) -> Result<String> {
    let Some(first) = records.first() else {
        return Err(Error::Contract("cannot plot an empty sample log".into()));
    };
    let k = first.r.len();
    if k < 2 {
        return Err(Error::Contract("need at least two objectives to plot".into()));
    }
    if let Some(bad) = records.iter().find(|r| r.r.len() != k || r.conditioning.len() != k) {
        return Err(Error::Dimension {
            context: "sample log",
            expected: k,
            got: bad.r.len().min(bad.conditioning.len()),
        });
    }
    let n = if k == 2 { 1 } else { k };
    let cell = PANEL + 2.0 * MARGIN;
    let size = cell * n as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(out, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    if k == 2 {
        panel(&mut out, records, 0, 1, MARGIN, MARGIN, coloring);
    } else {
        for row in 0..k {
            for col in 0..k {
                let (ox, oy) = (col as f64 * cell + MARGIN, row as f64 * cell + MARGIN);
                if row == col {
                    let _ = writeln!(
                        out,
                        r#"<text x="{}" y="{}" font-size="20" text-anchor="middle">r{}</text>"#,
                        ox + PANEL / 2.0,
                        oy + PANEL / 2.0,
                        row + 1
                    );
                } else {
                    panel(&mut out, records, col, row, ox, oy, coloring);
                }
            }
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::Mode;

    fn rec(r: Vec<f64>, c: Vec<f64>) -> SampleRecord {
        SampleRecord {
            seed: 0,
            mode: Mode::Preference,
            conditioning: c,
            coords: vec![0, 0],
            r,
            in_focus: None,
            scalar_reward: 0.0,
        }
    }

    #[test]
    fn one_sample_one_point() {
        let svg = scatter_svg(&[rec(vec![0.3, 0.7], vec![0.5, 0.5])], Coloring::Angle).unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(angle_color(&[1.0, 0.0], 0, 1), RAMP_START);
        assert_eq!(angle_color(&[0.0, 1.0], 0, 1), RAMP_END);
    }

    #[test]
    fn density_counts_sum_to_samples() {
        let pts = (0..500).map(|i| ((i as f64 * 0.37) % 1.0, (i as f64 * 0.11) % 1.0));
        assert_eq!(density_bins(pts).iter().sum::<u64>(), 500);
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(scatter_svg(&[], Coloring::Density).is_err());
    }

    #[test]
    fn three_objectives_use_six_panels() {
        let recs = vec![rec(vec![0.1, 0.2, 0.3], vec![0.2, 0.3, 0.5]); 4];
        let svg = scatter_svg(&recs, Coloring::Density).unwrap();
        assert_eq!(svg.matches("<circle").count(), 4 * 6);
    }
}
