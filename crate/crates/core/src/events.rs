//! Event-camera streams: CSV ingestion, fixed-duration windowing, and
//! rasterization into dense frames through a deposit kernel.
//!
//! Frames have `2·B` channels for `B` temporal bins, ordered bin-major with
//! polarity inside each bin: channel `2·b + p` where `p` is 0 for OFF and 1
//! for ON. Every event deposits a total mass of exactly one.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CSV_HEADER: [&str; 4] = ["t_us", "x", "y", "polarity"];

/// Default window length, 50 ms.
pub const DEFAULT_WINDOW_US: u64 = 50_000;
pub const DEFAULT_BINS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Off = 0,
    On = 1,
}

impl Polarity {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    /// Microseconds.
    pub t: u64,
    pub x: u32,
    pub y: u32,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    width: u32,
    height: u32,
    events: Vec<Event>,
}

impl EventStream {
    /// Validates bounds and non-decreasing timestamps. Errors cite the
    /// 1-based event position as the line (as if preceded by a header).
    pub fn new(width: u32, height: u32, events: Vec<Event>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "sensor geometry {width}x{height} is empty"
            )));
        }
        let mut prev = None;
        for (i, e) in events.iter().enumerate() {
            let line = i as u64 + 2;
            check_event(e, width, height, prev, line)?;
            prev = Some(e.t);
        }
        Ok(Self {
            width,
            height,
            events,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
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
}

fn check_event(e: &Event, width: u32, height: u32, prev: Option<u64>, line: u64) -> Result<()> {
    if e.x >= width || e.y >= height {
        return Err(Error::Bounds {
            line,
            x: e.x,
            y: e.y,
            width,
            height,
        });
    }
    if let Some(prev) = prev {
        if e.t < prev {
            return Err(Error::Ordering { line, t: e.t, prev });
        }
    }
    Ok(())
}

/// Parses `t_us,x,y,polarity` CSV for a `width × height` sensor.
pub fn parse_events(reader: impl Read, width: u32, height: u32) -> Result<EventStream> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "sensor geometry {width}x{height} is empty"
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let parse_err = |line: u64, message: String| Error::Parse { line, message };
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        parse_err(line, e.to_string())
    };

    match records.next() {
        None => {
            return Err(parse_err(
                1,
                format!("missing header {:?}", CSV_HEADER.join(",")),
            ))
        }
        Some(header) => {
            let header = header.map_err(csv_err)?;
            if header.iter().ne(CSV_HEADER) {
                return Err(parse_err(
                    1,
                    format!(
                        "header must be {:?}, got {:?}",
                        CSV_HEADER.join(","),
                        header.iter().collect::<Vec<_>>().join(",")
                    ),
                ));
            }
        }
    }

    let mut events = Vec::new();
    let mut prev = None;
    for record in records {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(parse_err(
                line,
                format!("expected 4 fields, got {}", record.len()),
            ));
        }
        let field = |i: usize| -> Result<u64> {
            record[i].parse::<u64>().map_err(|_| {
                parse_err(
                    line,
                    format!(
                        "{} {:?} is not a decimal integer",
                        CSV_HEADER[i], &record[i]
                    ),
                )
            })
        };
        let t = field(0)?;
        let coord = |i: usize| -> Result<u32> {
            let v = field(i)?;
            u32::try_from(v)
                .map_err(|_| parse_err(line, format!("{} {v} is out of range", CSV_HEADER[i])))
        };
        let (x, y) = (coord(1)?, coord(2)?);
        let polarity = match field(3)? {
            0 => Polarity::Off,
            1 => Polarity::On,
            p => return Err(parse_err(line, format!("polarity must be 0 or 1, got {p}"))),
        };
        let event = Event { t, x, y, polarity };
        check_event(&event, width, height, prev, line)?;
        prev = Some(t);
        events.push(event);
    }
    Ok(EventStream {
        width,
        height,
        events,
    })
}

/// Events falling in the half-open interval `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventWindow {
    pub index: usize,
    pub start: u64,
    pub end: u64,
    pub width: u32,
    pub height: u32,
    pub events: Vec<Event>,
}

impl EventWindow {
    /// A single window covering a whole stream, `start` at the first event
    /// and `end` at the last. Events at `end` land in the final bin.
    pub fn spanning(stream: &EventStream) -> Self {
        let (start, end) = match (stream.events.first(), stream.events.last()) {
            (Some(a), Some(b)) => (a.t, b.t),
            _ => (0, 0),
        };
        Self {
            index: 0,
            start,
            end,
            width: stream.width,
            height: stream.height,
            events: stream.events.clone(),
        }
    }
}

/// Splits a stream into consecutive `[t₀ + k·ΔT, t₀ + (k+1)·ΔT)` windows
/// anchored at the first event. Windows run from the first to the last
/// event; empty windows between them are kept so indices track time.
pub fn split_windows(stream: &EventStream, delta_t: u64) -> Result<Vec<EventWindow>> {
    if delta_t == 0 {
        return Err(Error::invalid("window length must be positive"));
    }
    let Some(first) = stream.events.first() else {
        return Ok(Vec::new());
    };
    let t0 = first.t;
    let mut windows: Vec<EventWindow> = Vec::new();
    for e in &stream.events {
        let k = ((e.t - t0) / delta_t) as usize;
        while windows.len() <= k {
            let i = windows.len() as u64;
            windows.push(EventWindow {
                index: windows.len(),
                start: t0 + i * delta_t,
                end: t0 + (i + 1) * delta_t,
                width: stream.width,
                height: stream.height,
                events: Vec::new(),
            });
        }
        windows[k].events.push(*e);
    }
    Ok(windows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// All mass into one temporal bin (event-count frame).
    #[default]
    Delta,
    /// Mass split linearly between the two nearest temporal bin centres.
    BilinearTime,
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(Kernel::Delta),
            "bilinear-t" | "bilinear_t" => Ok(Kernel::BilinearTime),
            other => Err(Error::invalid(format!(
                "unknown kernel {other:?} (expected delta or bilinear-t)"
            ))),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Delta => "delta",
            Kernel::BilinearTime => "bilinear-t",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventFrame {
    /// `(2·bins, H, W)`.
    pub tensor: Tensor<f32>,
    pub bins: usize,
    pub start: u64,
    pub end: u64,
}

impl EventFrame {
    pub fn channel(bin: usize, polarity: Polarity) -> usize {
        2 * bin + polarity.index()
    }
}

/// Position of `t` in the window scaled to `[0, 1]`; 0 for a window of zero
/// duration.
fn window_fraction(t: u64, start: u64, end: u64) -> f64 {
    if end > start {
        (t.saturating_sub(start)) as f64 / (end - start) as f64
    } else {
        0.0
    }
}

/// Splits unit mass into `(1 - frac, frac)` so the two `f32` weights sum to
/// exactly one.
fn split_unit(frac: f64) -> (f32, f32) {
    if frac >= 0.5 {
        let hi = frac as f32;
        (1.0 - hi, hi)
    } else {
        let lo = (1.0 - frac) as f32;
        (lo, 1.0 - lo)
    }
}

/// Temporal deposits `(bin, weight)` of one event.
fn temporal_weights(kernel: Kernel, bins: usize, frac: f64) -> [(usize, f32); 2] {
    let last = bins - 1;
    match kernel {
        Kernel::Delta => {
            let bin = ((bins as f64 * frac).floor() as usize).min(last);
            [(bin, 1.0), (bin, 0.0)]
        }
        Kernel::BilinearTime => {
            let coord = bins as f64 * frac - 0.5;
            if coord <= 0.0 {
                return [(0, 1.0), (0, 0.0)];
            }
            let lo = coord.floor();
            let lo_bin = lo as usize;
            if lo_bin >= last {
                return [(last, 1.0), (last, 0.0)];
            }
            let (w_lo, w_hi) = split_unit(coord - lo);
            [(lo_bin, w_lo), (lo_bin + 1, w_hi)]
        }
    }
}

pub fn rasterize(window: &EventWindow, bins: usize, kernel: Kernel) -> Result<EventFrame> {
    if bins == 0 {
        return Err(Error::invalid("bin count must be at least 1"));
    }
    let (w, h) = (window.width as usize, window.height as usize);
    let plane = w * h;
    let mut cells = vec![0.0f64; 2 * bins * plane];
    for e in &window.events {
        let frac = window_fraction(e.t, window.start, window.end);
        let pixel = e.y as usize * w + e.x as usize;
        for (bin, weight) in temporal_weights(kernel, bins, frac) {
            if weight != 0.0 {
                cells[EventFrame::channel(bin, e.polarity) * plane + pixel] += weight as f64;
            }
        }
    }
    let data = cells.into_iter().map(|v| v as f32).collect();
    Ok(EventFrame {
        tensor: Tensor::new(vec![2 * bins, h, w], data)?,
        bins,
        start: window.start,
        end: window.end,
    })
}
