//! Client for an external predictor speaking newline-delimited JSON over
//! stdio.
//!
//! Request: `{"id":int,"seed":int,"n_samples":int,"crop":[4][256][256]}`.
//! Response: `{"id":int,"samples":[n][80][80]}` or `{"id":int,"error":str}`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use serde::Deserialize;

use super::{PredictError, PredictionEnsemble, Predictor};
use crate::mapping::{CropInput, GridIndex, CROP_SIZE, PREDICT_SIZE};

struct Connection {
    child: Option<Child>,
    writer: Box<dyn Write + Send>,
    reader: Box<dyn BufRead + Send>,
    next_id: u64,
}

/// One connection to a predictor process. Requests are serialized: the
/// lock is held from writing a request until its response is read.
pub struct BridgeClient {
    command: String,
    conn: Mutex<Connection>,
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    #[serde(default)]
    samples: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    error: Option<String>,
}

impl BridgeClient {
    /// Starts `sh -c <command>` with piped stdin/stdout; stderr is inherited.
    pub fn spawn(command: &str) -> Result<Self, PredictError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let writer = Box::new(child.stdin.take().expect("piped stdin"));
        let reader = Box::new(BufReader::new(child.stdout.take().expect("piped stdout")));
        Ok(Self {
            command: command.to_string(),
            conn: Mutex::new(Connection {
                child: Some(child),
                writer,
                reader,
                next_id: 0,
            }),
        })
    }

    /// Wraps existing streams, e.g. pipes to an in-process server.
    pub fn from_streams(reader: impl BufRead + Send + 'static, writer: impl Write + Send + 'static) -> Self {
        Self {
            command: String::from("<streams>"),
            conn: Mutex::new(Connection {
                child: None,
                writer: Box::new(writer),
                reader: Box::new(reader),
                next_id: 0,
            }),
        }
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    /// Sends one request and waits for its response.
    pub fn request(&self, crop: &CropInput, n_samples: usize, seed: u64) -> Result<PredictionEnsemble, PredictError> {
        if n_samples == 0 {
            return Err(PredictError::NoSamples);
        }
        let mut conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let id = conn.next_id;
        conn.next_id += 1;
        let line = encode_request(id, seed, n_samples, crop);
        conn.writer.write_all(line.as_bytes())?;
        conn.writer.flush()?;

        let mut reply = String::new();
        if conn.reader.read_line(&mut reply)? == 0 {
            return Err(PredictError::Closed);
        }
        drop(conn);
        decode_response(&reply, id, n_samples, crop.center)
    }
}

impl Drop for BridgeClient {
    fn drop(&mut self) {
        let conn = self.conn.get_mut().unwrap_or_else(|e| e.into_inner());
        // Closing stdin signals end-of-input to the server.
        conn.writer = Box::new(std::io::sink());
        if let Some(mut child) = conn.child.take() {
            if child.wait().is_err() {
                let _ = child.kill();
            }
        }
    }
}

impl Predictor for BridgeClient {
    fn name(&self) -> &str {
        "bridge"
    }

    fn predict(&self, crop: &CropInput, n_samples: usize, seed: u64) -> Result<PredictionEnsemble, PredictError> {
        self.request(crop, n_samples, seed)
    }
}

pub(crate) fn encode_request(id: u64, seed: u64, n_samples: usize, crop: &CropInput) -> String {
    // Four channels of 0/1 written as decimal floats; roughly 2.6 MB a line.
    let mut s = String::with_capacity(4 * CROP_SIZE * (CROP_SIZE * 4 + 2) + 96);
    write!(s, r#"{{"id":{id},"seed":{seed},"n_samples":{n_samples},"crop":["#).unwrap();
    for (ci, ch) in crop.channels().iter().enumerate() {
        if ci > 0 {
            s.push(',');
        }
        s.push('[');
        for r in 0..CROP_SIZE {
            if r > 0 {
                s.push(',');
            }
            s.push('[');
            for c in 0..CROP_SIZE {
                if c > 0 {
                    s.push(',');
                }
                s.push_str(if ch[r * CROP_SIZE + c] == 0 { "0.0" } else { "1.0" });
            }
            s.push(']');
        }
        s.push(']');
    }
    s.push_str("]}\n");
    s
}

fn decode_response(
    line: &str,
    id: u64,
    n_samples: usize,
    centroid: GridIndex,
) -> Result<PredictionEnsemble, PredictError> {
    let resp: Response = serde_json::from_str(line.trim_end())
        .map_err(|e| PredictError::Protocol(format!("unparseable response: {e}")))?;
    if resp.id != id {
        return Err(PredictError::Protocol(format!(
            "response id {} for request {id}",
            resp.id
        )));
    }
    if let Some(message) = resp.error {
        return Err(PredictError::Remote { id, message });
    }
    let samples = resp
        .samples
        .ok_or_else(|| PredictError::Protocol("response has neither samples nor error".into()))?;
    if samples.len() != n_samples {
        return Err(PredictError::Shape(format!(
            "{} samples, expected {n_samples}",
            samples.len()
        )));
    }
    let mut flat = Vec::with_capacity(n_samples);
    for (j, raster) in samples.into_iter().enumerate() {
        if raster.len() != PREDICT_SIZE || raster.iter().any(|row| row.len() != PREDICT_SIZE) {
            return Err(PredictError::Shape(format!(
                "sample {j} is not {PREDICT_SIZE}×{PREDICT_SIZE}"
            )));
        }
        flat.push(raster.into_iter().flatten().collect());
    }
    PredictionEnsemble::new(centroid, flat)
}

/// Outcome of [`check_bridge`].
#[derive(Clone, Debug, serde::Serialize)]
pub struct BridgeCheck {
    pub n_samples: usize,
    pub deterministic: bool,
    pub min_value: f64,
    pub max_value: f64,
}

/// Sends a synthetic crop twice with the same seed and verifies shapes,
/// value range and that the answers agree to the wire tolerance.
pub fn check_bridge(client: &BridgeClient, n_samples: usize, seed: u64) -> Result<BridgeCheck, PredictError> {
    let crop = probe_crop();
    let a = client.request(&crop, n_samples, seed)?;
    let b = client.request(&crop, n_samples, seed)?;
    let flat = || a.samples().iter().flatten().copied();
    let deterministic = a
        .samples()
        .iter()
        .flatten()
        .zip(b.samples().iter().flatten())
        .all(|(x, y)| (x - y).abs() <= 2.0 * super::RANGE_TOLERANCE);
    Ok(BridgeCheck {
        n_samples: a.n_samples(),
        deterministic,
        min_value: flat().fold(f64::INFINITY, f64::min),
        max_value: flat().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// A room whose right half is unknown, centred on the crop.
fn probe_crop() -> CropInput {
    use crate::mapping::{extract_crop, GridGeometry, OccupancyGrid};
    let mut m = OccupancyGrid::new(GridGeometry::new(CROP_SIZE, CROP_SIZE, 0.1, 0.0, 0.0));
    let mid = (CROP_SIZE / 2) as i32;
    for y in mid - 30..mid + 30 {
        for x in mid - 30..mid {
            let wall = y == mid - 30 || y == mid + 29 || x == mid - 30;
            m.set_log_odds(GridIndex::new(x, y), if wall { 2.0 } else { -2.0 });
        }
    }
    extract_crop(&m, GridIndex::new(mid, mid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{pipe, BufReader};
    use std::thread;

    /// Reads requests and answers each with `answer(request)`.
    fn serve(answer: impl Fn(&serde_json::Value) -> String + Send + 'static) -> BridgeClient {
        let (req_r, req_w) = pipe().unwrap();
        let (resp_r, mut resp_w) = pipe().unwrap();
        thread::spawn(move || {
            for line in BufReader::new(req_r).lines() {
                let Ok(line) = line else { break };
                let v: serde_json::Value = serde_json::from_str(&line).unwrap();
                if writeln!(resp_w, "{}", answer(&v)).is_err() {
                    break;
                }
            }
        });
        BridgeClient::from_streams(BufReader::new(resp_r), req_w)
    }

    fn samples_json(id: &serde_json::Value, n: usize, value: f64) -> String {
        let raster = vec![vec![value; PREDICT_SIZE]; PREDICT_SIZE];
        serde_json::json!({ "id": id, "samples": vec![raster; n] }).to_string()
    }

    #[test]
    fn request_wire_shape() {
        let crop = probe_crop();
        let line = encode_request(7, 11, 3, &crop);
        assert!(line.ends_with('\n') && !line[..line.len() - 1].contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["id"], 7);
        assert_eq!(v["seed"], 11);
        assert_eq!(v["n_samples"], 3);
        let ch = v["crop"].as_array().unwrap();
        assert_eq!(ch.len(), 4);
        for c in ch {
            let rows = c.as_array().unwrap();
            assert_eq!(rows.len(), CROP_SIZE);
            assert!(rows.iter().all(|r| r.as_array().unwrap().len() == CROP_SIZE));
        }
        // Pixel (row 128, col 100) lies in the known free part of the room.
        assert_eq!(v["crop"][0][128][100], 1.0);
        assert_eq!(v["crop"][2][128][200], 1.0);
        assert_eq!(v["crop"][3][128][128], 1.0);
        assert_eq!(v["crop"][3][0][0], 0.0);
    }

    #[test]
    fn round_trip_through_mock_server() {
        let client = serve(|req| {
            let n = req["n_samples"].as_u64().unwrap() as usize;
            let seed = req["seed"].as_u64().unwrap();
            samples_json(&req["id"], n, if seed % 2 == 0 { 0.25 } else { 1.0 + 4e-7 })
        });
        let crop = probe_crop();
        let e = client.predict(&crop, 3, 2).unwrap();
        assert_eq!(e.n_samples(), 3);
        assert_eq!(e.centroid, crop.center);
        assert!(e.samples().iter().flatten().all(|&v| v == 0.25));
        let e = client.predict(&crop, 1, 3).unwrap();
        assert!(e.samples()[0].iter().all(|&v| v == 1.0));

        let report = check_bridge(&client, 2, 4).unwrap();
        assert!(report.deterministic);
        assert_eq!((report.min_value, report.max_value), (0.25, 0.25));
    }

    #[test]
    fn error_responses_and_bad_shapes() {
        let client = serve(|req| match req["seed"].as_u64().unwrap() {
            0 => serde_json::json!({ "id": req["id"], "error": "model not loaded" }).to_string(),
            1 => samples_json(&req["id"], 1, 0.5),
            2 => samples_json(&req["id"], 2, 1.5),
            3 => serde_json::json!({ "id": 999, "samples": [] }).to_string(),
            _ => "not json".to_string(),
        });
        let crop = probe_crop();
        assert!(matches!(
            client.predict(&crop, 2, 0),
            Err(PredictError::Remote { id: 0, .. })
        ));
        assert!(matches!(client.predict(&crop, 2, 1), Err(PredictError::Shape(_))));
        assert!(matches!(
            client.predict(&crop, 2, 2),
            Err(PredictError::OutOfRange { .. })
        ));
        assert!(matches!(client.predict(&crop, 2, 3), Err(PredictError::Protocol(_))));
        assert!(matches!(client.predict(&crop, 2, 4), Err(PredictError::Protocol(_))));
        assert!(matches!(client.predict(&crop, 0, 1), Err(PredictError::NoSamples)));
    }

    #[test]
    fn concurrent_requests_stay_paired() {
        let client = std::sync::Arc::new(serve(|req| {
            let seed = req["seed"].as_u64().unwrap();
            samples_json(&req["id"], 1, seed as f64 / 100.0)
        }));
        let crop = std::sync::Arc::new(probe_crop());
        let handles: Vec<_> = (0..8u64)
            .map(|s| {
                let (c, crop) = (client.clone(), crop.clone());
                thread::spawn(move || c.predict(&crop, 1, s).unwrap().samples()[0][0])
            })
            .collect();
        for (s, h) in handles.into_iter().enumerate() {
            assert_eq!(h.join().unwrap(), s as f64 / 100.0);
        }
    }

    #[test]
    fn closed_streams_and_dead_process() {
        let client = BridgeClient::from_streams(std::io::empty(), std::io::sink());
        assert!(matches!(client.predict(&probe_crop(), 1, 0), Err(PredictError::Closed)));
        let client = BridgeClient::spawn("exit 0").unwrap();
        assert!(matches!(
            client.predict(&probe_crop(), 1, 0),
            Err(PredictError::Io(_) | PredictError::Closed)
        ));
    }
}
