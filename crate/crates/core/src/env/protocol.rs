//! Batch binding used by external learners: `spec`, `reset(seeds)` and
//! `step(actions K×4)` over flat row-major arrays, either in-process or as
//! JSON lines over a local TCP socket.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::batch::BatchEnv;
use super::config::{ObservationMode, ResolvedConfig};
use super::dataset::SeedTrajectoryDataset;
use super::episode::{StepInfo, StepResult};
use super::EnvError;
use crate::dynamics::CONTROL_DT;
use crate::reward::RewardBreakdown;

pub const PROTOCOL_VERSION: &str = "narrowgap-batch/1";

pub trait Dtype: Copy {
    const NAME: &'static str;
}

impl Dtype for f64 {
    const NAME: &'static str = "float64";
}

impl Dtype for u8 {
    const NAME: &'static str = "uint8";
}

impl Dtype for i8 {
    const NAME: &'static str = "int8";
}

/// Flat row-major array with its element type and shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatArray<T> {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Dtype> FlatArray<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, EnvError> {
        let a = Self {
            dtype: T::NAME.into(),
            shape,
            data,
        };
        a.check()?;
        Ok(a)
    }

    pub fn check(&self) -> Result<(), EnvError> {
        if self.dtype != T::NAME {
            return Err(EnvError::Shape(format!("dtype {} where {} expected", self.dtype, T::NAME)));
        }
        let n: usize = self.shape.iter().product();
        if n != self.data.len() {
            return Err(EnvError::Shape(format!("shape {:?} holds {n} elements, data has {}", self.shape, self.data.len())));
        }
        Ok(())
    }

    /// Row `i` of a 2-D array.
    pub fn row(&self, i: usize) -> &[T] {
        let w = self.shape.get(1).copied().unwrap_or(1);
        &self.data[i * w..(i + 1) * w]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub mode: ObservationMode,
    /// Length of the per-env float feature vector.
    pub feature_dim: usize,
    /// `[height, width]` of the mask, mask mode only.
    pub mask_shape: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub shape: [usize; 1],
    pub low: [f64; 4],
    pub high: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub protocol: String,
    pub num_envs: usize,
    pub dt: f64,
    pub observation: ObservationSpec,
    pub action: ActionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationBatch {
    /// `[K, feature_dim]`.
    pub features: FlatArray<f64>,
    /// `[K, H, W]`, mask mode only.
    pub masks: Option<FlatArray<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepBatch {
    pub observations: ObservationBatch,
    pub reward: FlatArray<f64>,
    pub done: FlatArray<u8>,
    pub reward_terms: Vec<RewardBreakdown>,
    pub info: Vec<StepInfo>,
}

pub fn observation_spec(cfg: &ResolvedConfig) -> ObservationSpec {
    let ep = &cfg.episode;
    match ep.observation {
        ObservationMode::Points => ObservationSpec {
            mode: ep.observation,
            feature_dim: 3 * ep.edge_points + 2 + 4 + 3,
            mask_shape: None,
        },
        ObservationMode::Mask => ObservationSpec {
            mode: ep.observation,
            feature_dim: 2 + 4,
            mask_shape: Some([ep.camera.height as usize, ep.camera.width as usize]),
        },
    }
}

pub fn observation_batch(results: &[StepResult], spec: &ObservationSpec) -> Result<ObservationBatch, EnvError> {
    let k = results.len();
    let features: Vec<f64> = results.iter().flat_map(|r| r.observation.features()).collect();
    let masks = match spec.mask_shape {
        Some([h, w]) => {
            let mut data = Vec::with_capacity(k * h * w);
            for r in results {
                let m = r
                    .observation
                    .mask()
                    .ok_or_else(|| EnvError::Shape("mask expected".into()))?;
                data.extend_from_slice(&m.data);
            }
            Some(FlatArray::new(vec![k, h, w], data)?)
        }
        None => None,
    };
    Ok(ObservationBatch {
        features: FlatArray::new(vec![k, spec.feature_dim], features)?,
        masks,
    })
}

/// In-process end of the binding.
#[derive(Debug, Clone)]
pub struct BatchBinding {
    cfg: Arc<ResolvedConfig>,
    batch: BatchEnv,
    ready: bool,
}

impl BatchBinding {
    pub fn new(cfg: Arc<ResolvedConfig>, dataset: Arc<SeedTrajectoryDataset>, num_envs: usize) -> Self {
        Self {
            batch: BatchEnv::new(cfg.clone(), dataset, num_envs),
            cfg,
            ready: false,
        }
    }

    pub fn spec(&self) -> BatchSpec {
        let a = &self.cfg.episode.action;
        BatchSpec {
            protocol: PROTOCOL_VERSION.into(),
            num_envs: self.batch.len(),
            dt: CONTROL_DT,
            observation: observation_spec(&self.cfg),
            action: ActionSpec {
                shape: [4],
                low: a.low(),
                high: a.high(),
            },
        }
    }

    pub fn reset(&mut self, seeds: &[u64]) -> Result<ObservationBatch, EnvError> {
        let r = self.batch.reset(seeds)?;
        self.ready = true;
        observation_batch(&r, &observation_spec(&self.cfg))
    }

    pub fn step(&mut self, actions: &FlatArray<f64>) -> Result<StepBatch, EnvError> {
        if !self.ready {
            return Err(EnvError::Protocol("step before reset".into()));
        }
        actions.check()?;
        let k = self.batch.len();
        if actions.shape != [k, 4] {
            return Err(EnvError::Shape(format!("actions shape {:?}, expected [{k}, 4]", actions.shape)));
        }
        let acts: Vec<[f64; 4]> = (0..k).map(|i| actions.row(i).try_into().expect("row of 4")).collect();
        let results = self.batch.step(&acts)?;
        Ok(StepBatch {
            observations: observation_batch(&results, &observation_spec(&self.cfg))?,
            reward: FlatArray::new(vec![k], results.iter().map(|r| r.reward.total).collect())?,
            done: FlatArray::new(vec![k], results.iter().map(|r| r.done as u8).collect())?,
            reward_terms: results.iter().map(|r| r.reward).collect(),
            info: results.into_iter().map(|r| r.info).collect(),
        })
    }

    /// Handle one request; every failure becomes an error response.
    pub fn handle(&mut self, req: &Request) -> Response {
        if req.protocol != PROTOCOL_VERSION {
            return Response::error(format!("protocol {:?} not supported, expected {PROTOCOL_VERSION:?}", req.protocol));
        }
        let out = match req.method.as_str() {
            "spec" => to_value(self.spec()),
            "reset" => match &req.seeds {
                Some(s) => self.reset(s).and_then(to_value),
                None => Err(EnvError::Protocol("reset needs seeds".into())),
            },
            "step" => match &req.actions {
                Some(a) => self.step(a).and_then(to_value),
                None => Err(EnvError::Protocol("step needs actions".into())),
            },
            m => Err(EnvError::Protocol(format!("unknown method {m:?}"))),
        };
        match out {
            Ok(v) => Response::ok(v),
            Err(e) => Response::error(e.to_string()),
        }
    }

    pub fn handle_line(&mut self, line: &str) -> Response {
        match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(&req),
            Err(e) => Response::error(format!("malformed request: {e}")),
        }
    }
}

fn to_value<T: Serialize>(v: T) -> Result<serde_json::Value, EnvError> {
    Ok(serde_json::to_value(v)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub protocol: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<FlatArray<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<ObservationBatch>,
}

impl Request {
    pub fn new(method: &str) -> Self {
        Self {
            protocol: PROTOCOL_VERSION.into(),
            method: method.into(),
            seeds: None,
            actions: None,
            observations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub protocol: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn ok(result: serde_json::Value) -> Self {
        Self {
            protocol: PROTOCOL_VERSION.into(),
            ok: true,
            result: Some(result),
            error: None,
        }
    }

    pub fn error(msg: String) -> Self {
        Self {
            protocol: PROTOCOL_VERSION.into(),
            ok: false,
            result: None,
            error: Some(msg),
        }
    }

    pub fn into_result<T: DeserializeOwned>(self) -> Result<T, EnvError> {
        if !self.ok {
            return Err(EnvError::Remote(self.error.unwrap_or_default()));
        }
        Ok(serde_json::from_value(self.result.unwrap_or(serde_json::Value::Null))?)
    }
}

/// Serve one connection: one JSON request per line, one response per line,
/// until the peer closes.
pub fn serve_connection(binding: &mut BatchBinding, stream: TcpStream) -> Result<(), EnvError> {
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = binding.handle_line(&line);
        writeln!(writer, "{}", serde_json::to_string(&resp)?)?;
        writer.flush()?;
    }
    Ok(())
}

/// Accept connections one after another. Stops after `max_connections`
/// if given.
pub fn serve(binding: &mut BatchBinding, listener: TcpListener, max_connections: Option<usize>) -> Result<(), EnvError> {
    let mut served = 0;
    for stream in listener.incoming() {
        serve_connection(binding, stream?)?;
        served += 1;
        if max_connections.is_some_and(|m| served >= m) {
            break;
        }
    }
    Ok(())
}

/// Blocking line-oriented JSON client.
#[derive(Debug)]
pub struct LineClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl LineClient {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, EnvError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            writer: stream.try_clone()?,
            reader: BufReader::new(stream),
        })
    }

    pub fn call(&mut self, req: &Request) -> Result<Response, EnvError> {
        writeln!(self.writer, "{}", serde_json::to_string(req)?)?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(EnvError::Protocol("connection closed".into()));
        }
        Ok(serde_json::from_str(&line)?)
    }

    pub fn spec(&mut self) -> Result<BatchSpec, EnvError> {
        self.call(&Request::new("spec"))?.into_result()
    }

    pub fn reset(&mut self, seeds: &[u64]) -> Result<ObservationBatch, EnvError> {
        let req = Request {
            seeds: Some(seeds.to_vec()),
            ..Request::new("reset")
        };
        self.call(&req)?.into_result()
    }

    pub fn step(&mut self, actions: FlatArray<f64>) -> Result<StepBatch, EnvError> {
        let req = Request {
            actions: Some(actions),
            ..Request::new("step")
        };
        self.call(&req)?.into_result()
    }

    /// Ask a remote policy server for actions: `{"method": "act",
    /// "observations": …}` answered with `{"actions": [K, 4]}`.
    pub fn act(&mut self, observations: ObservationBatch) -> Result<FlatArray<f64>, EnvError> {
        #[derive(Deserialize)]
        struct Act {
            actions: FlatArray<f64>,
        }
        let req = Request {
            observations: Some(observations),
            ..Request::new("act")
        };
        let a: Act = self.call(&req)?.into_result()?;
        a.actions.check()?;
        Ok(a.actions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EpisodeConfig;

    fn binding(k: usize) -> BatchBinding {
        let cfg = Arc::new(EpisodeConfig::default().resolve().unwrap());
        BatchBinding::new(cfg, Arc::new(SeedTrajectoryDataset::default()), k)
    }

    #[test]
    fn flat_array_shape_checked() {
        assert!(FlatArray::new(vec![2, 3], vec![0.0f64; 5]).is_err());
        let bad = FlatArray::<f64> {
            dtype: "float32".into(),
            shape: vec![1],
            data: vec![0.0],
        };
        assert!(bad.check().is_err());
    }

    #[test]
    fn spec_reset_step_shapes() {
        let mut b = binding(3);
        let spec = b.spec();
        assert_eq!(spec.protocol, PROTOCOL_VERSION);
        let obs = b.reset(&[1, 2, 3]).unwrap();
        assert_eq!(obs.features.shape, vec![3, spec.observation.feature_dim]);
        let acts = FlatArray::new(vec![3, 4], [9.81, 0.0, 0.0, 0.0].repeat(3)).unwrap();
        let s = b.step(&acts).unwrap();
        assert_eq!(s.reward.shape, vec![3]);
        assert_eq!(s.info.len(), 3);
    }

    #[test]
    fn protocol_mismatch_rejected() {
        let mut b = binding(1);
        let r = b.handle(&Request {
            protocol: "narrowgap-batch/0".into(),
            ..Request::new("spec")
        });
        assert!(!r.ok);
        let r = b.handle_line("{not json");
        assert!(!r.ok);
    }

    #[test]
    fn wrong_action_shape_rejected() {
        let mut b = binding(2);
        b.reset(&[0, 1]).unwrap();
        let acts = FlatArray::new(vec![1, 4], vec![9.81, 0.0, 0.0, 0.0]).unwrap();
        assert!(b.step(&acts).is_err());
    }
}
