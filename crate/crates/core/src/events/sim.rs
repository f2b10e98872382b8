use super::{Event, EventConfig, EventStream};
use crate::error::{Error, Result};
use crate::image::RadianceImage;

/// Guards `floor(|ΔL| / Θ)` against round-off when a change is an exact
/// multiple of the threshold.
const COUNT_SLACK: f64 = 1e-9;

/// Ideal, noise-free event camera driven by a sequence of log-luminance
/// frames.
///
/// Each pixel keeps a reference level, initialised from the first frame.
/// Between consecutive frames the log signal is linear in time; every crossing
/// of `reference ± kΘ` emits one event at the interpolated crossing time and
/// moves the reference. Sub-threshold residuals carry over.
pub fn simulate_events(frames: &[(f64, RadianceImage)], cfg: &EventConfig) -> Result<EventStream> {
    cfg.validate()?;
    if frames.len() < 2 {
        return Err(Error::InvalidArgument("event simulation needs at least two frames".into()));
    }
    let (_, first) = &frames[0];
    if first.channels != 1 {
        return Err(Error::ShapeMismatch("event simulation expects log-luminance frames".into()));
    }
    for (i, (t, f)) in frames.iter().enumerate() {
        first.check_same_shape(f)?;
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("time of frame {i}")));
        }
        if i > 0 && *t < frames[i - 1].0 {
            return Err(Error::InvalidArgument(format!("frame {i} is earlier than frame {}", i - 1)));
        }
    }
    let (w, h) = (first.width, first.height);
    if w > u16::MAX as usize + 1 || h > u16::MAX as usize + 1 {
        return Err(Error::InvalidArgument("sensor too large for 16-bit coordinates".into()));
    }

    let theta = cfg.theta;
    let mut reference = first.data.clone();
    let mut events = Vec::new();
    for pair in frames.windows(2) {
        let (t0, f0) = (&pair[0].0, &pair[0].1);
        let (t1, f1) = (&pair[1].0, &pair[1].1);
        for pix in 0..w * h {
            let (l0, l1) = (f0.data[pix], f1.data[pix]);
            let diff = l1 - reference[pix];
            let k = (diff.abs() / theta + COUNT_SLACK).floor();
            if k < 1.0 {
                continue;
            }
            let sign = diff.signum();
            let (x, y) = ((pix % w) as u16, (pix / w) as u16);
            for j in 1..=k as u64 {
                let level = reference[pix] + sign * theta * j as f64;
                let frac = if l1 != l0 { ((level - l0) / (l1 - l0)).clamp(0.0, 1.0) } else { 1.0 };
                // a crossing at frac = 0 belongs to the previous interval's end
                let t = if frac > 0.0 { t0 + frac * (t1 - t0) } else { *t1 };
                events.push(Event::new(x, y, t, sign as i8));
            }
            reference[pix] += sign * theta * k;
        }
    }
    EventStream::from_unsorted(w, h, events)
}
