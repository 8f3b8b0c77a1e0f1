mod common;

use common::rng;
use rand::Rng;
use trifuse_core::events::{
    parse_events, rasterize, split_windows, Event, EventFrame, EventStream, EventWindow, Kernel,
    Polarity,
};
use trifuse_core::Error;

fn random_stream(seed: u64) -> EventStream {
    let mut r = rng(seed);
    let (w, h) = (r.random_range(1..=12u32), r.random_range(1..=12u32));
    let n = r.random_range(0..=200);
    let mut t = r.random_range(0..1_000_000u64);
    let events = (0..n)
        .map(|_| {
            // Bursts of equal timestamps and occasional long gaps.
            t += match r.random_range(0..10) {
                0..=2 => 0,
                9 => r.random_range(0..300_000),
                _ => r.random_range(1..5_000),
            };
            Event {
                t,
                x: r.random_range(0..w),
                y: r.random_range(0..h),
                polarity: if r.random_bool(0.5) {
                    Polarity::On
                } else {
                    Polarity::Off
                },
            }
        })
        .collect();
    EventStream::new(w, h, events).unwrap()
}

fn polarity_mass(frame: &EventFrame, polarity: Polarity) -> f64 {
    let plane = frame.tensor.shape()[1] * frame.tensor.shape()[2];
    (0..frame.bins)
        .flat_map(|b| {
            let c = EventFrame::channel(b, polarity);
            frame.tensor.data()[c * plane..(c + 1) * plane]
                .iter()
                .map(|&v| v as f64)
        })
        .sum()
}

/// Bilinear deposit computed independently: bin centres at `(k + 0.5) / B`
/// of the window, mass clamped onto the end bins outside the outer centres.
fn bilinear_reference(window: &EventWindow, bins: usize) -> Vec<f64> {
    let (w, h) = (window.width as usize, window.height as usize);
    let mut out = vec![0.0; 2 * bins * w * h];
    let len = (window.end - window.start) as f64;
    for e in &window.events {
        let s = if len > 0.0 {
            (e.t - window.start) as f64 / len
        } else {
            0.0
        };
        for k in 0..bins {
            let centre = (k as f64 + 0.5) / bins as f64;
            let mut weight = (1.0 - (s - centre).abs() * bins as f64).max(0.0);
            if (k == 0 && s <= centre) || (k == bins - 1 && s >= centre) {
                weight = 1.0;
            }
            let c = 2 * k + e.polarity.index();
            out[(c * h + e.y as usize) * w + e.x as usize] += weight;
        }
    }
    out
}

#[test]
fn windows_partition_the_stream() {
    for seed in 0..300 {
        let s = random_stream(seed);
        let dt = rng(seed ^ 1).random_range(1..200_000u64);
        let windows = split_windows(&s, dt).unwrap();
        let total: usize = windows.iter().map(|w| w.events.len()).sum();
        assert_eq!(total, s.len());
        let flat: Vec<Event> = windows.iter().flat_map(|w| w.events.clone()).collect();
        assert_eq!(flat, s.events());
        for (i, w) in windows.iter().enumerate() {
            assert_eq!(w.index, i);
            assert_eq!(w.end - w.start, dt);
            assert!(w.events.iter().all(|e| w.start <= e.t && e.t < w.end));
            if i > 0 {
                assert_eq!(w.start, windows[i - 1].end);
            }
        }
        if let (Some(first), Some(last)) = (windows.first(), windows.last()) {
            assert_eq!(first.start, s.events()[0].t);
            assert!(!last.events.is_empty());
        }
    }
}

#[test]
fn rasterization_conserves_mass() {
    for seed in 0..1000 {
        let s = random_stream(seed);
        let mut r = rng(seed ^ 2);
        let dt = r.random_range(1..200_000u64);
        let bins = r.random_range(1..=5);
        for window in split_windows(&s, dt).unwrap() {
            let on = window
                .events
                .iter()
                .filter(|e| e.polarity == Polarity::On)
                .count() as f64;
            let off = window.events.len() as f64 - on;

            let delta = rasterize(&window, bins, Kernel::Delta).unwrap();
            assert_eq!(
                delta.tensor.shape(),
                &[2 * bins, s.height() as usize, s.width() as usize]
            );
            assert_eq!(polarity_mass(&delta, Polarity::On), on, "seed {seed}");
            assert_eq!(polarity_mass(&delta, Polarity::Off), off, "seed {seed}");
            assert!(delta
                .tensor
                .data()
                .iter()
                .all(|v| v.fract() == 0.0 && *v >= 0.0));

            let bi = rasterize(&window, bins, Kernel::BilinearTime).unwrap();
            assert!(
                (polarity_mass(&bi, Polarity::On) - on).abs() <= 1e-6,
                "seed {seed}"
            );
            assert!(
                (polarity_mass(&bi, Polarity::Off) - off).abs() <= 1e-6,
                "seed {seed}"
            );
            assert!(bi.tensor.data().iter().all(|v| *v >= 0.0));
        }
    }
}

#[test]
fn bilinear_matches_reference() {
    for seed in 0..200 {
        let s = random_stream(seed);
        let bins = 1 + seed as usize % 4;
        for window in split_windows(&s, 40_000).unwrap() {
            let got = rasterize(&window, bins, Kernel::BilinearTime).unwrap();
            let want = bilinear_reference(&window, bins);
            for (g, w) in got.tensor.data().iter().zip(&want) {
                assert!((*g as f64 - w).abs() <= 1e-6, "seed {seed}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn window_boundary_is_half_open() {
    let ev = |t| Event {
        t,
        x: 0,
        y: 0,
        polarity: Polarity::On,
    };
    let s = EventStream::new(2, 2, vec![ev(100), ev(149), ev(150), ev(199), ev(200)]).unwrap();
    let w = split_windows(&s, 50).unwrap();
    let counts: Vec<usize> = w.iter().map(|w| w.events.len()).collect();
    assert_eq!(counts, [2, 2, 1]);
    assert_eq!((w[1].start, w[1].end), (150, 200));
    assert_eq!(w[1].events[0].t, 150);
}

#[test]
fn gaps_keep_empty_windows() {
    let ev = |t| Event {
        t,
        x: 1,
        y: 0,
        polarity: Polarity::Off,
    };
    let s = EventStream::new(2, 1, vec![ev(0), ev(350)]).unwrap();
    let w = split_windows(&s, 100).unwrap();
    assert_eq!(w.len(), 4);
    assert!(w[1].events.is_empty() && w[2].events.is_empty());
    let frame = rasterize(&w[1], 2, Kernel::Delta).unwrap();
    assert!(frame.tensor.data().iter().all(|&v| v == 0.0));
}

#[test]
fn delta_bins_split_the_window_evenly() {
    let window = EventWindow {
        index: 0,
        start: 0,
        end: 100,
        width: 1,
        height: 1,
        events: [0, 24, 25, 49, 50, 99]
            .into_iter()
            .map(|t| Event {
                t,
                x: 0,
                y: 0,
                polarity: Polarity::On,
            })
            .collect(),
    };
    let f = rasterize(&window, 4, Kernel::Delta).unwrap();
    let on: Vec<f32> = (0..4)
        .map(|b| f.tensor.data()[EventFrame::channel(b, Polarity::On)])
        .collect();
    assert_eq!(on, [2.0, 2.0, 1.0, 1.0]);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let line_of = |csv: &str| match parse_events(csv.as_bytes(), 4, 4) {
        Err(Error::Parse { line, .. })
        | Err(Error::Bounds { line, .. })
        | Err(Error::Ordering { line, .. }) => line,
        other => panic!("expected a located error, got {other:?}"),
    };
    assert_eq!(line_of("t,x,y,p\n"), 1);
    assert_eq!(line_of(""), 1);
    assert_eq!(line_of("t_us,x,y,polarity\n1,0,0,1\n2,0,0,2\n"), 3);
    assert_eq!(line_of("t_us,x,y,polarity\n1,0,0,1\n2,0,0,0\nx,0,0,1\n"), 4);
    assert_eq!(line_of("t_us,x,y,polarity\n5,0,0,1\n4,0,0,1\n"), 3);
    assert_eq!(line_of("t_us,x,y,polarity\n5,4,0,1\n"), 2);
    assert_eq!(line_of("t_us,x,y,polarity\n5,0,0\n"), 2);
    assert_eq!(line_of("t_us,x,y,polarity\n-5,0,0,1\n"), 2);
}

#[test]
fn parsed_stream_round_trips_through_csv() {
    for seed in 0..50 {
        let s = random_stream(seed);
        let mut csv = String::from("t_us,x,y,polarity\n");
        for e in s.events() {
            csv += &format!("{},{},{},{}\n", e.t, e.x, e.y, e.polarity.index());
        }
        let back = parse_events(csv.as_bytes(), s.width(), s.height()).unwrap();
        assert_eq!(back, s);
    }
}

#[test]
fn header_only_stream_has_no_windows() {
    let s = parse_events("t_us,x,y,polarity\n".as_bytes(), 3, 3).unwrap();
    assert!(s.is_empty());
    assert!(split_windows(&s, 10).unwrap().is_empty());
    assert!(split_windows(&s, 0).is_err());
}
