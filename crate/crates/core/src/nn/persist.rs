//! JSON model container. Parameter buffers are base64 of little-endian f64.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{History, Network, NetworkSpec, NnError, TrainedNetwork};

pub const FORMAT_NAME: &str = "biosig-affect-network";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Container {
    format: String,
    version: u32,
    spec: NetworkSpec,
    params: Vec<Vec<String>>,
    running: Vec<Vec<String>>,
    history: History,
}

fn encode_buf(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_buf(s: &str) -> Result<Vec<f64>, NnError> {
    let bytes = STANDARD.decode(s).map_err(|e| NnError::Persist(format!("bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(NnError::Persist(format!("buffer of {} bytes is not a whole number of f64", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn encode_all(p: &[Vec<Vec<f64>>]) -> Vec<Vec<String>> {
    p.iter().map(|l| l.iter().map(|b| encode_buf(b)).collect()).collect()
}

fn decode_all(p: &[Vec<String>]) -> Result<Vec<Vec<Vec<f64>>>, NnError> {
    p.iter().map(|l| l.iter().map(|b| decode_buf(b)).collect()).collect()
}

pub fn to_json(net: &TrainedNetwork) -> Result<String, NnError> {
    let c = Container {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        spec: net.network.spec().clone(),
        params: encode_all(&net.network.params),
        running: encode_all(&net.network.running),
        history: net.history.clone(),
    };
    Ok(serde_json::to_string(&c)?)
}

pub fn from_json(s: &str) -> Result<TrainedNetwork, NnError> {
    let c: Container = serde_json::from_str(s)?;
    if c.format != FORMAT_NAME {
        return Err(NnError::Persist(format!("unknown format {:?}", c.format)));
    }
    if c.version != FORMAT_VERSION {
        return Err(NnError::Persist(format!("unsupported version {}", c.version)));
    }
    let network = Network::from_parts(c.spec, decode_all(&c.params)?, decode_all(&c.running)?)?;
    Ok(TrainedNetwork { network, history: c.history })
}

pub fn save_network(net: &TrainedNetwork, path: &Path) -> Result<(), NnError> {
    std::fs::write(path, to_json(net)?)?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<TrainedNetwork, NnError> {
    from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_ae, AeWidths, Shape, TensorBuf};

    fn sample() -> TrainedNetwork {
        let mut network = Network::new(build_ae(1280, &AeWidths::eda().narrowed(16)), 7).unwrap();
        network.running.iter_mut().flatten().flatten().for_each(|v| *v += 0.1);
        TrainedNetwork { network, history: History::default() }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let t = sample();
        let back = from_json(&to_json(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        let x = TensorBuf::new(Shape::new(1280, 1), 1, (0..1280).map(|i| (i as f64 / 50.0).cos().abs()).collect()).unwrap();
        let a = t.network.predict(&x).unwrap().data;
        let b = back.network.predict(&x).unwrap().data;
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn wrong_version_and_shapes_are_rejected() {
        let t = sample();
        let s = to_json(&t).unwrap().replace("\"version\":1", "\"version\":99");
        assert!(matches!(from_json(&s), Err(NnError::Persist(_))));

        let mut c: Container = serde_json::from_str(&to_json(&t).unwrap()).unwrap();
        c.params[0][0] = encode_buf(&[1.0, 2.0]);
        let s = serde_json::to_string(&c).unwrap();
        assert!(matches!(from_json(&s), Err(NnError::Persist(_))));
    }
}
