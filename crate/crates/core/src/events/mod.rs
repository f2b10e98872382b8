//! Event streams: data model, polarity accumulation, the ideal event
//! simulator, and predicted event maps from rendered log-luminance.
//!
//! Events carry luminance semantics. RGB radiance is reduced with Rec.709
//! weights before taking logarithms.

mod io;
mod sim;

pub use io::{read_events, read_events_binary, read_events_csv, write_events, write_events_binary, write_events_csv};
pub use sim::simulate_events;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RadianceImage;

pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: f64,
    /// +1 or −1.
    pub p: i8,
}

impl Event {
    pub fn new(x: u16, y: u16, t: f64, p: i8) -> Self {
        Event { x, y, t, p }
    }

    fn order_key(&self) -> (f64, u16, u16, i8) {
        (self.t, self.y, self.x, self.p)
    }
}

fn cmp_events(a: &Event, b: &Event) -> std::cmp::Ordering {
    let (ka, kb) = (a.order_key(), b.order_key());
    ka.0.total_cmp(&kb.0)
        .then(ka.1.cmp(&kb.1))
        .then(ka.2.cmp(&kb.2))
        .then(ka.3.cmp(&kb.3))
}

/// Time-ordered events from one sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    width: usize,
    height: usize,
    events: Vec<Event>,
}

impl EventStream {
    pub fn empty(width: usize, height: usize) -> Self {
        EventStream {
            width,
            height,
            events: Vec::new(),
        }
    }

    /// Validates bounds, polarity and ordering of already-sorted events.
    pub fn new(width: usize, height: usize, events: Vec<Event>) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if e.x as usize >= width || e.y as usize >= height {
                return Err(Error::InvalidArgument(format!(
                    "event {i} at ({}, {}) outside {width}x{height} sensor",
                    e.x, e.y
                )));
            }
            if e.p != 1 && e.p != -1 {
                return Err(Error::InvalidArgument(format!("event {i} has polarity {}", e.p)));
            }
            if !e.t.is_finite() {
                return Err(Error::NonFinite(format!("timestamp of event {i}")));
            }
            if i > 0 && cmp_events(&events[i - 1], e) == std::cmp::Ordering::Greater {
                return Err(Error::InvalidArgument(format!("event {i} is out of order")));
            }
        }
        Ok(EventStream {
            width,
            height,
            events,
        })
    }

    /// Sorts by time, ties broken by `(y, x, p)`, then validates.
    pub fn from_unsorted(width: usize, height: usize, mut events: Vec<Event>) -> Result<Self> {
        events.sort_by(cmp_events);
        Self::new(width, height, events)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `t_from < t ≤ t_to`.
    pub fn window(&self, t_from: f64, t_to: f64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.t <= t_from);
        let hi = self.events.partition_point(|e| e.t <= t_to);
        &self.events[lo..hi.max(lo)]
    }

    pub fn time_range(&self) -> Option<(f64, f64)> {
        Some((self.events.first()?.t, self.events.last()?.t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    /// Contrast threshold Θ in log-radiance units.
    pub theta: f64,
    /// Offset inside the logarithm.
    pub log_eps: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig {
            theta: 0.2,
            log_eps: 1e-3,
        }
    }
}

impl EventConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidArgument(format!("theta must be positive, got {}", self.theta)));
        }
        if !(self.log_eps > 0.0 && self.log_eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("log_eps must be positive, got {}", self.log_eps)));
        }
        Ok(())
    }
}

/// A per-pixel scalar map (signed event counts or their predictions).
#[derive(Clone, Debug, PartialEq)]
pub struct PixelMap<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy + Default> PixelMap<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        PixelMap {
            width,
            height,
            data: vec![T::default(); width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }
}

pub type EventCountMap = PixelMap<i32>;

pub fn luminance(rgb: &[f64]) -> f64 {
    match rgb.len() {
        3 => LUMA_WEIGHTS[0] * rgb[0] + LUMA_WEIGHTS[1] * rgb[1] + LUMA_WEIGHTS[2] * rgb[2],
        _ => rgb[0],
    }
}

/// `ln(Y + log_eps)` with Rec.709 luminance `Y`; single-channel images are
/// taken as luminance directly.
pub fn log_luminance(img: &RadianceImage, cfg: &EventConfig) -> RadianceImage {
    let data = img
        .data
        .chunks_exact(img.channels)
        .map(|px| (luminance(px) + cfg.log_eps).ln())
        .collect();
    RadianceImage {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    }
}

/// Sum of polarities per pixel over `(t_pre, t_cur]`.
pub fn accumulate(stream: &EventStream, t_pre: f64, t_cur: f64) -> Result<EventCountMap> {
    if t_pre > t_cur {
        return Err(Error::InvalidArgument(format!(
            "accumulation window ({t_pre}, {t_cur}] is reversed"
        )));
    }
    let mut map = EventCountMap::zeros(stream.width, stream.height);
    for e in stream.window(t_pre, t_cur) {
        map.data[e.y as usize * stream.width + e.x as usize] += e.p as i32;
    }
    Ok(map)
}

/// Running polarity sums `C(t) = Σ p over events with time ≤ t`, evaluated at
/// each of `times` (ascending), so `accumulate(a, b) = C(b) − C(a)`.
pub fn cumulative_counts(stream: &EventStream, times: &[f64]) -> Result<Vec<EventCountMap>> {
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("cumulative times must be ascending".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut running = EventCountMap::zeros(stream.width, stream.height);
    let mut next = 0;
    let events = stream.events();
    for &t in times {
        while next < events.len() && events[next].t <= t {
            let e = &events[next];
            running.data[e.y as usize * stream.width + e.x as usize] += e.p as i32;
            next += 1;
        }
        out.push(running.clone());
    }
    Ok(out)
}

/// `(L_end − L_start) / Θ` between two latent log-luminance images.
pub fn predicted_event_map(
    latent_log_images: &[RadianceImage],
    i_start: usize,
    i_end: usize,
    cfg: &EventConfig,
) -> Result<PixelMap<f64>> {
    if i_start >= i_end || i_end >= latent_log_images.len() {
        return Err(Error::InvalidArgument(format!(
            "latent indices {i_start}..{i_end} invalid for {} images",
            latent_log_images.len()
        )));
    }
    let (a, b) = (&latent_log_images[i_start], &latent_log_images[i_end]);
    a.check_same_shape(b)?;
    if a.channels != 1 {
        return Err(Error::ShapeMismatch("predicted events need log-luminance images".into()));
    }
    Ok(PixelMap {
        width: a.width,
        height: a.height,
        data: a.data.iter().zip(&b.data).map(|(la, lb)| (lb - la) / cfg.theta).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> EventConfig {
        EventConfig::default()
    }

    #[test]
    fn log_luminance_cases() {
        let zero = RadianceImage::new(4, 3, 3);
        let l = log_luminance(&zero, &cfg());
        assert_eq!(l.channels, 1);
        assert!(l.data.iter().all(|&v| v == 1e-3f64.ln()));

        let gray = RadianceImage::filled(2, 2, 3, 0.3);
        let l = log_luminance(&gray, &cfg());
        assert!(l.data.iter().all(|&v| (v - (0.3f64 + 1e-3).ln()).abs() < 1e-15));

        let single = RadianceImage::filled(2, 2, 1, 0.3);
        assert_eq!(log_luminance(&single, &cfg()).data, l.data);

        let a = RadianceImage::filled(1, 1, 3, 0.5);
        let b = RadianceImage::filled(1, 1, 3, 1.0);
        let shift = log_luminance(&b, &cfg()).data[0] - log_luminance(&a, &cfg()).data[0];
        let direct = (1.0f64 + 1e-3).ln() - (0.5f64 + 1e-3).ln();
        assert!((shift - direct).abs() < 1e-15);
        assert!((shift - 2f64.ln()).abs() < 2e-3);
    }

    #[test]
    fn accumulate_empty_and_signed() {
        let s = EventStream::empty(3, 3);
        assert!(accumulate(&s, 0.0, 1.0).unwrap().data.iter().all(|&v| v == 0));

        let s = EventStream::from_unsorted(
            3,
            3,
            vec![Event::new(1, 2, 0.2, 1), Event::new(1, 2, 0.4, -1), Event::new(1, 2, 0.3, 1)],
        )
        .unwrap();
        let m = accumulate(&s, 0.0, 1.0).unwrap();
        assert_eq!(m.get(1, 2), 1);
        assert_eq!(m.data.iter().map(|v| v.abs()).sum::<i32>(), 1);
    }

    #[test]
    fn accumulate_window_is_half_open() {
        let s = EventStream::new(2, 1, vec![Event::new(0, 0, 0.5, 1), Event::new(1, 0, 1.0, 1)]).unwrap();
        let m = accumulate(&s, 0.5, 1.0).unwrap();
        assert_eq!(m.get(0, 0), 0, "event at t_pre is excluded");
        assert_eq!(m.get(1, 0), 1, "event at t_cur is included");
        assert!(accumulate(&s, 1.0, 0.5).is_err());
    }

    #[test]
    fn stream_validation() {
        assert!(EventStream::new(2, 2, vec![Event::new(2, 0, 0.0, 1)]).is_err());
        assert!(EventStream::new(2, 2, vec![Event::new(0, 0, 0.0, 0)]).is_err());
        assert!(EventStream::new(2, 2, vec![Event::new(0, 0, 1.0, 1), Event::new(0, 0, 0.5, 1)]).is_err());
        let s = EventStream::from_unsorted(
            2,
            2,
            vec![Event::new(1, 1, 0.5, 1), Event::new(0, 1, 0.5, -1), Event::new(1, 0, 0.5, 1)],
        )
        .unwrap();
        let order: Vec<(u16, u16)> = s.events().iter().map(|e| (e.x, e.y)).collect();
        assert_eq!(order, vec![(1, 0), (0, 1), (1, 1)]);
    }

    #[test]
    fn cumulative_counts_reproduce_accumulate() {
        let events: Vec<Event> = (0..50)
            .map(|i| Event::new((i % 4) as u16, (i % 3) as u16, 0.01 * i as f64, if i % 3 == 0 { -1 } else { 1 }))
            .collect();
        let s = EventStream::from_unsorted(4, 3, events).unwrap();
        let times = [0.0, 0.1, 0.2, 0.33, 0.5];
        let c = cumulative_counts(&s, &times).unwrap();
        for a in 0..times.len() {
            for b in a..times.len() {
                let acc = accumulate(&s, times[a], times[b]).unwrap();
                let diff: Vec<i32> = c[b].data.iter().zip(&c[a].data).map(|(x, y)| x - y).collect();
                assert_eq!(acc.data, diff);
            }
        }
    }

    #[test]
    fn predicted_map_cases() {
        let a = RadianceImage::filled(2, 2, 1, 0.3);
        assert!(predicted_event_map(&[a.clone(), a.clone()], 0, 1, &cfg())
            .unwrap()
            .data
            .iter()
            .all(|&v| v == 0.0));
        let mut b = a.clone();
        b.data[3] += 0.2;
        let m = predicted_event_map(&[a.clone(), b], 0, 1, &cfg()).unwrap();
        assert!((m.data[3] - 1.0).abs() < 1e-12);
        assert!(predicted_event_map(&[a.clone(), a.clone()], 1, 1, &cfg()).is_err());
        assert!(predicted_event_map(&[a.clone(), a], 0, 2, &cfg()).is_err());
    }
}
