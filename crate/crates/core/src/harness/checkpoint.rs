//! Binary agent checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | field        | size                | notes                                  |
//! |--------------|---------------------|----------------------------------------|
//! | magic        | 8                   | `DAAHMCKP`                             |
//! | version      | u32                 | currently 1                            |
//! | scalar width | u8                  | 4 (`f32`) or 8 (`f64`)                 |
//! | payload len  | u64                 | bytes of payload that follow           |
//! | payload      | payload len         | see below                              |
//! | checksum     | 32                  | SHA-256 of every preceding byte        |
//!
//! The payload holds `gamma` and `tau` as `f64`, then the actor, critic,
//! target actor and target critic. Each network is a `u32` layer count
//! followed by, per layer, `inputs: u32`, `outputs: u32`, an activation tag
//! byte (0 ReLU, 1 sigmoid, 2 identity), the row-major `inputs x outputs`
//! weights and the `outputs` biases, each value at the scalar width.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::agents::{DdpgAgent, DdpgConfig};
use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, MlpParams};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"DAAHMCKP";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 1 + 8;
const CHECKSUM_LEN: usize = 32;

/// Everything a checkpoint stores.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Scalar> {
    pub actor: MlpParams<T>,
    pub critic: MlpParams<T>,
    pub target_actor: MlpParams<T>,
    pub target_critic: MlpParams<T>,
    pub gamma: f64,
    pub tau: f64,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_agent(agent: &DdpgAgent<T>) -> Self {
        Self {
            actor: agent.actor.clone(),
            critic: agent.critic.clone(),
            target_actor: agent.target_actor.clone(),
            target_critic: agent.target_critic.clone(),
            gamma: agent.gamma().as_f64(),
            tau: agent.tau().as_f64(),
        }
    }

    /// Rebuilds an agent with fresh optimiser state; `gamma` and `tau` come
    /// from the checkpoint, learning rates from `config`.
    pub fn into_agent(self, config: &DdpgConfig) -> Result<DdpgAgent<T>> {
        let config = DdpgConfig {
            gamma: self.gamma,
            tau: self.tau,
            ..config.clone()
        };
        let mut agent = DdpgAgent::from_networks(self.actor.clone(), self.critic.clone(), &config)?;
        agent.set_networks(
            self.actor,
            self.critic,
            self.target_actor,
            self.target_critic,
        )?;
        Ok(agent)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        payload.extend_from_slice(&self.gamma.to_le_bytes());
        payload.extend_from_slice(&self.tau.to_le_bytes());
        for net in [
            &self.actor,
            &self.critic,
            &self.target_actor,
            &self.target_critic,
        ] {
            write_network(&mut payload, net);
        }
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CHECKSUM_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(T::WIDTH);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Integrity(format!(
                "file is {} bytes, shorter than the header",
                bytes.len()
            )));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Integrity("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let width = bytes[12];
        let payload_len = u64::from_le_bytes(bytes[13..21].try_into().expect("8 bytes"));
        let expected = (HEADER_LEN as u64)
            .checked_add(payload_len)
            .and_then(|n| n.checked_add(CHECKSUM_LEN as u64));
        if expected != Some(bytes.len() as u64) {
            return Err(Error::Integrity(format!(
                "file is {} bytes but its header promises {}",
                bytes.len(),
                expected.map_or_else(|| "an impossible size".to_owned(), |n| n.to_string())
            )));
        }
        let body_end = bytes.len() - CHECKSUM_LEN;
        if Sha256::digest(&bytes[..body_end]).as_slice() != &bytes[body_end..] {
            return Err(Error::Integrity("checksum mismatch".into()));
        }
        if width != T::WIDTH {
            return Err(Error::invalid(format!(
                "checkpoint stores {width}-byte scalars, this agent uses {}-byte scalars",
                T::WIDTH
            )));
        }

        let mut r = Reader {
            bytes: &bytes[HEADER_LEN..body_end],
        };
        let gamma = r.f64()?;
        let tau = r.f64()?;
        let actor = read_network(&mut r)?;
        let critic = read_network(&mut r)?;
        let target_actor = read_network(&mut r)?;
        let target_critic = read_network(&mut r)?;
        if !r.bytes.is_empty() {
            return Err(Error::Integrity(format!(
                "{} trailing payload bytes",
                r.bytes.len()
            )));
        }
        Ok(Self {
            actor,
            critic,
            target_actor,
            target_critic,
            gamma,
            tau,
        })
    }
}

pub fn save_checkpoint<T: Scalar>(agent: &DdpgAgent<T>, path: &Path) -> Result<()> {
    std::fs::write(path, Checkpoint::from_agent(agent).to_bytes())
        .map_err(|e| Error::from(e).context(format!("writing checkpoint {}", path.display())))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::from(e).context(format!("reading checkpoint {}", path.display())))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| e.context(format!("checkpoint {}", path.display())))
}

fn write_scalar<T: Scalar>(out: &mut Vec<u8>, v: T) {
    if T::WIDTH == 4 {
        out.extend_from_slice(&v.to_f32().expect("f32 scalar").to_le_bytes());
    } else {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

fn write_network<T: Scalar>(out: &mut Vec<u8>, net: &MlpParams<T>) {
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        out.extend_from_slice(&(layer.inputs() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.outputs() as u32).to_le_bytes());
        out.push(layer.activation().tag());
        for &v in layer.weights().iter().chain(layer.bias()) {
            write_scalar(out, v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Integrity("payload ends early".into()));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn scalar<T: Scalar>(&mut self) -> Result<T> {
        if T::WIDTH == 4 {
            let v = f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes"));
            Ok(T::from_f32(v).expect("f32 scalar"))
        } else {
            Ok(T::lit(self.f64()?))
        }
    }
}

fn read_network<T: Scalar>(r: &mut Reader<'_>) -> Result<MlpParams<T>> {
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let inputs = r.u32()? as usize;
        let outputs = r.u32()? as usize;
        let tag = r.u8()?;
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| Error::Integrity(format!("unknown activation tag {tag}")))?;
        let n = inputs
            .checked_mul(outputs)
            .filter(|n| {
                n.saturating_add(outputs).saturating_mul(T::WIDTH as usize) <= r.bytes.len()
            })
            .ok_or_else(|| Error::Integrity("layer larger than the payload".into()))?;
        let weights = (0..n).map(|_| r.scalar()).collect::<Result<Vec<T>>>()?;
        let bias = (0..outputs)
            .map(|_| r.scalar())
            .collect::<Result<Vec<T>>>()?;
        layers.push(Dense::new(inputs, outputs, weights, bias, activation)?);
    }
    MlpParams::from_layers(layers)
}
