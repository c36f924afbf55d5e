use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use uncerseg::codec::{decode_gray_png, encode_prob_png};
use uncerseg::segmenter::remote::remote_segment;
use uncerseg::*;

const INSIDE: f64 = 0.8;
const OUTSIDE: f64 = 0.1;

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Normal,
    /// Closes the first `n` connections without answering.
    DropFirst(usize),
    Status500,
    BadJson,
    WrongCount,
    BadPng,
}

struct Mock {
    addr: String,
    hits: Arc<AtomicUsize>,
}

fn read_request(stream: &mut TcpStream) -> Option<(String, String, Vec<u8>)> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((k, v)) = header.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body).ok()?;
    Some((method, path, body))
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = if status == 200 { "OK" } else { "Error" };
    let msg = format!(
        "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(msg.as_bytes());
    let _ = stream.flush();
}

fn mock_masks(body: &[u8]) -> Vec<String> {
    let req: Value = serde_json::from_slice(body).unwrap();
    let png = STANDARD.decode(req["image"].as_str().unwrap()).unwrap();
    let img = decode_gray_png(&png).unwrap();
    let (w, h) = (img.width() as usize, img.height() as usize);
    req["boxes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| {
            let c: Vec<f64> = b.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
            let bbox = BBox::new(c[0], c[1], c[2], c[3]).unwrap();
            let m = ProbMask::from_fn(w, h, |x, y| if bbox.covers_pixel(x, y) { INSIDE } else { OUTSIDE }).unwrap();
            STANDARD.encode(encode_prob_png(&m).unwrap())
        })
        .collect()
}

fn handle(mut stream: TcpStream, mode: Mode, index: usize) {
    if let Mode::DropFirst(n) = mode {
        if index < n {
            return;
        }
    }
    let Some((method, path, body)) = read_request(&mut stream) else { return };
    match (method.as_str(), path.as_str()) {
        ("GET", "/v1/health") => respond(&mut stream, 200, r#"{"status":"ok"}"#),
        ("POST", "/v1/segment") => match mode {
            Mode::Status500 => respond(&mut stream, 500, r#"{"error":"model exploded"}"#),
            Mode::BadJson => respond(&mut stream, 200, r#"{"masks": 12"#),
            Mode::WrongCount => {
                let mut masks = mock_masks(&body);
                masks.pop();
                respond(&mut stream, 200, &json!({ "masks": masks }).to_string());
            }
            Mode::BadPng => {
                let masks: Vec<String> = mock_masks(&body).iter().map(|_| STANDARD.encode(b"not a png")).collect();
                respond(&mut stream, 200, &json!({ "masks": masks }).to_string());
            }
            _ => respond(&mut stream, 200, &json!({ "masks": mock_masks(&body) }).to_string()),
        },
        _ => respond(&mut stream, 404, r#"{"error":"not found"}"#),
    }
}

fn spawn_mock(mode: Mode) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let index = counter.fetch_add(1, Ordering::SeqCst);
            std::thread::spawn(move || handle(stream, mode, index));
        }
    });
    Mock { addr, hits }
}

fn client(mock: &Mock) -> RemoteSegmenter {
    let config = RemoteConfig {
        timeout: Duration::from_secs(10),
        base_delay: Duration::from_millis(5),
        ..RemoteConfig::new(mock.addr.clone())
    };
    RemoteSegmenter::new(config).unwrap()
}

fn test_image(w: u32, h: u32) -> GrayImage {
    GrayImage::from_fn(w, h, |x, y| image::Luma([((x * 7 + y * 3) % 256) as u8]))
}

fn expected(bbox: &BBox, x: usize, y: usize) -> f64 {
    if bbox.covers_pixel(x, y) {
        INSIDE
    } else {
        OUTSIDE
    }
}

#[test]
fn health_reports_ok() {
    let mock = spawn_mock(Mode::Normal);
    client(&mock).health().unwrap();
}

#[test]
fn three_boxes_three_masks_within_quantization() {
    let mock = spawn_mock(Mode::Normal);
    let seg = client(&mock);
    let img = test_image(24, 16);
    let boxes = vec![
        BBox::new(2.0, 2.0, 10.0, 9.0).unwrap(),
        BBox::new(5.5, 0.0, 24.0, 16.0).unwrap(),
        BBox::new(0.0, 8.0, 3.0, 16.0).unwrap(),
    ];
    let masks = seg.segment_boxes(&img, &boxes, &[PointPrompt::positive(4.5, 4.5)]).unwrap();
    assert_eq!(masks.len(), 3);
    for (bbox, mask) in boxes.iter().zip(&masks) {
        assert_eq!((mask.width(), mask.height()), (24, 16));
        for y in 0..16 {
            for x in 0..24 {
                assert!((mask.get(x, y) - expected(bbox, x, y)).abs() <= 1.0 / 65535.0);
            }
        }
    }
}

#[test]
fn segment_one_matches_wire_rule() {
    let mock = spawn_mock(Mode::Normal);
    let seg = client(&mock);
    let img = test_image(8, 8);
    let bbox = BBox::new(1.0, 1.0, 5.0, 4.0).unwrap();
    let mask = seg.segment_one(&img, &bbox, &[]).unwrap();
    assert!((mask.get(2, 2) - INSIDE).abs() <= 1.0 / 65535.0);
    assert!((mask.get(7, 7) - OUTSIDE).abs() <= 1.0 / 65535.0);
}

#[test]
fn randomized_round_trips_with_concurrent_health() {
    let mock = spawn_mock(Mode::Normal);
    let seg = client(&mock);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases: Vec<(GrayImage, Vec<BBox>)> = (0..50)
        .map(|_| {
            let w = rng.random_range(4..40u32);
            let h = rng.random_range(4..40u32);
            let n = rng.random_range(1..4usize);
            let boxes = (0..n)
                .map(|_| {
                    let x0 = rng.random_range(0.0..w as f64 - 1.0);
                    let y0 = rng.random_range(0.0..h as f64 - 1.0);
                    let x1 = rng.random_range(x0 + 1.0..=w as f64);
                    let y1 = rng.random_range(y0 + 1.0..=h as f64);
                    BBox::new(x0, y0, x1, y1).unwrap()
                })
                .collect();
            (test_image(w, h), boxes)
        })
        .collect();
    let seg = &seg;
    std::thread::scope(|s| {
        let health = s.spawn(|| {
            for _ in 0..20 {
                seg.health().unwrap();
            }
        });
        for chunk in cases.chunks(10) {
            s.spawn(move || {
                for (img, boxes) in chunk {
                    let masks = seg.segment_boxes(img, boxes, &[]).unwrap();
                    assert_eq!(masks.len(), boxes.len());
                    for (bbox, mask) in boxes.iter().zip(&masks) {
                        for y in 0..mask.height() {
                            for x in 0..mask.width() {
                                assert!((mask.get(x, y) - expected(bbox, x, y)).abs() <= 1.0 / 65535.0);
                            }
                        }
                    }
                }
            });
        }
        health.join().unwrap();
    });
}

#[test]
fn transient_failures_are_retried() {
    let mock = spawn_mock(Mode::DropFirst(2));
    let seg = client(&mock);
    seg.segment_one(&test_image(6, 6), &BBox::new(0.0, 0.0, 3.0, 3.0).unwrap(), &[]).unwrap();
    assert_eq!(mock.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn exhausted_retries_raise_transport_error() {
    let mock = spawn_mock(Mode::DropFirst(usize::MAX));
    let config = RemoteConfig { retries: 2, base_delay: Duration::from_millis(1), ..RemoteConfig::new(mock.addr.clone()) };
    let seg = RemoteSegmenter::new(config).unwrap();
    let err = seg.segment_one(&test_image(6, 6), &BBox::new(0.0, 0.0, 3.0, 3.0).unwrap(), &[]).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err:?}");
    assert!(err.is_backend());
    assert_eq!(mock.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config = RemoteConfig { retries: 1, base_delay: Duration::from_millis(1), ..RemoteConfig::new(format!("http://127.0.0.1:{port}")) };
    let err = RemoteSegmenter::new(config).unwrap().health().unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err:?}");
}

#[test]
fn http_error_status_is_backend_error() {
    let mock = spawn_mock(Mode::Status500);
    let err = client(&mock).segment_one(&test_image(6, 6), &BBox::new(0.0, 0.0, 3.0, 3.0).unwrap(), &[]).unwrap_err();
    match err {
        Error::Backend(msg) => assert!(msg.contains("model exploded"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_responses_are_protocol_errors() {
    let bbox = BBox::new(0.0, 0.0, 3.0, 3.0).unwrap();
    for mode in [Mode::BadJson, Mode::WrongCount, Mode::BadPng] {
        let mock = spawn_mock(mode);
        let err = client(&mock).segment_one(&test_image(6, 6), &bbox, &[]).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err:?}");
    }
}

#[test]
fn one_shot_helper_round_trips() {
    let mock = spawn_mock(Mode::Normal);
    let img = test_image(5, 5);
    let req = SegmentRequest::new(&img, vec![BBox::new(0.0, 0.0, 2.0, 2.0).unwrap()], vec![]).unwrap();
    let resp = remote_segment(&mock.addr, &req, Duration::from_secs(5), 0).unwrap();
    let masks = resp.decode(1, Dims::new(5, 5)).unwrap();
    assert!((masks[0].get(1, 1) - INSIDE).abs() <= 1.0 / 65535.0);
}

#[test]
fn remote_backend_drives_the_pipeline() {
    let mock = spawn_mock(Mode::Normal);
    let seg = client(&mock);
    let img = test_image(32, 32);
    let cfg = RefineConfig { k_points: 2, seed: 3, ..Default::default() };
    let out = refine_segmentation(&img, &BBox::new(8.0, 8.0, 20.0, 20.0).unwrap(), &[], &cfg, &seg).unwrap();
    assert!(out.trace.final_scalar_u <= out.baseline.scalar_u);
    assert!(out.trace.backend_calls >= 3);
}
