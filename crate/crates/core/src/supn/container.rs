//! SUPN container file format.
//!
//! Layout: magic `SUPN`; u32 little-endian version (1); u32 little-endian
//! header length; UTF-8 JSON header describing the model geometry and plane
//! order; then contiguous little-endian f32 planes in header-declared order.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{offset_set, NeighborhoodLayout, SupnParams};
use crate::error::{Error, Result};
use crate::imaging::Plane;

const MAGIC: &[u8; 4] = b"SUPN";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ContainerHeader {
    component_id: String,
    width: usize,
    height: usize,
    channels: usize,
    window: u32,
    offsets: Vec<(i32, i32)>,
    plane_order: Vec<String>,
}

fn plane_order(params: &SupnParams) -> Vec<String> {
    let mut order = vec!["mu".to_string(), "log_diag".to_string()];
    for k in 0..params.off_diag.len() {
        order.push(format!("off_{k:02}"));
    }
    if params.intra.is_some() {
        order.push("intra".to_string());
    }
    order
}

fn plane_for_name<'a>(params: &'a SupnParams, name: &str) -> Option<&'a Plane> {
    match name {
        "mu" => Some(&params.mu),
        "log_diag" => Some(&params.log_diag),
        "intra" => params.intra.as_ref(),
        _ => {
            let k: usize = name.strip_prefix("off_")?.parse().ok()?;
            params.off_diag.get(k)
        }
    }
}

/// Write a model to a SUPN container file.
pub fn save_supn(params: &SupnParams, component_id: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let order = plane_order(params);
    let header = ContainerHeader {
        component_id: component_id.to_string(),
        width: params.width(),
        height: params.height(),
        channels: params.channels(),
        window: params.layout.window(),
        offsets: params.layout.offsets().to_vec(),
        plane_order: order.clone(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Invalid(format!("header serialization: {e}")))?;

    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for name in &order {
        let plane = plane_for_name(params, name).expect("order lists existing planes");
        for &v in plane.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}

/// Read a model and its component id back from a SUPN container file.
pub fn load_supn(path: impl AsRef<Path>) -> Result<(SupnParams, String)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse_container(&bytes).map_err(|e| Error::Decode(format!("{}: {e}", path.display())))
}

fn parse_container(bytes: &[u8]) -> std::result::Result<(SupnParams, String), String> {
    if bytes.len() < 12 {
        return Err("truncated container: missing fixed header".into());
    }
    if &bytes[0..4] != MAGIC {
        return Err(format!(
            "magic check failed: expected {MAGIC:?}, found {:?}",
            &bytes[0..4]
        ));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(format!("version mismatch: file has {version}, expected {VERSION}"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or("truncated container: header exceeds file size")?;
    let header: ContainerHeader = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| format!("header parse: {e}"))?;

    let layout = NeighborhoodLayout::new(header.window, header.channels)
        .map_err(|e| format!("invalid layout: {e}"))?;
    let expected_offsets = offset_set(header.window).expect("window validated above");
    if header.offsets != expected_offsets {
        return Err("offset list does not match the declared window".into());
    }

    let (w, h, c) = (header.width, header.height, header.channels);
    let pixel = w * h;
    let mut expected_samples = 0usize;
    for name in &header.plane_order {
        expected_samples += plane_samples(name, pixel, c)?;
    }
    let payload = &bytes[header_end..];
    if payload.len() != expected_samples * 4 {
        return Err(format!(
            "payload size mismatch: header declares {} bytes of plane data, file holds {}",
            expected_samples * 4,
            payload.len()
        ));
    }

    let mut mu = None;
    let mut log_diag = None;
    let mut off: Vec<Option<Plane>> = vec![None; layout.offsets().len()];
    let mut intra = None;
    let mut cursor = 0usize;
    for name in &header.plane_order {
        let count = plane_samples(name, pixel, c)?;
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let at = cursor + i * 4;
            let v = f32::from_le_bytes(payload[at..at + 4].try_into().unwrap());
            data.push(v as f64);
        }
        cursor += count * 4;
        let channels = count / pixel;
        let plane = Plane::new(w, h, channels, data).map_err(|e| format!("plane {name}: {e}"))?;
        match name.as_str() {
            "mu" => mu = Some(plane),
            "log_diag" => log_diag = Some(plane),
            "intra" => intra = Some(plane),
            _ => {
                let k: usize = name.strip_prefix("off_").unwrap().parse().unwrap();
                if k >= off.len() {
                    return Err(format!("coupling plane {name} out of range"));
                }
                off[k] = Some(plane);
            }
        }
    }
    let mu = mu.ok_or("missing mu plane")?;
    let log_diag = log_diag.ok_or("missing log_diag plane")?;
    let off: Vec<Plane> = off
        .into_iter()
        .enumerate()
        .map(|(k, p)| p.ok_or(format!("missing coupling plane off_{k:02}")))
        .collect::<std::result::Result<_, _>>()?;
    let params = SupnParams::new(layout, mu, log_diag, off, intra)
        .map_err(|e| format!("inconsistent container: {e}"))?;
    Ok((params, header.component_id))
}

fn plane_samples(name: &str, pixel: usize, c: usize) -> std::result::Result<usize, String> {
    match name {
        "mu" | "log_diag" => Ok(pixel * c),
        "intra" => {
            if c != 2 {
                return Err("intra plane in a single-channel container".into());
            }
            Ok(pixel)
        }
        _ if name.starts_with("off_") => Ok(pixel * c * c),
        _ => Err(format!("unknown plane name {name}")),
    }
}
