use std::fmt::Write;

use serde_json::Value;

use super::{MaskRef, ObjectInstance, VideoTwin};
use crate::canonical::format_decimal;

fn quote(text: &str) -> String {
    serde_json::to_string(text).expect("strings always serialize")
}

fn write_mask(out: &mut String, mask: &MaskRef) {
    match mask {
        MaskRef::Path(path) => out.push_str(&quote(path)),
        MaskRef::Inline(rle) => {
            out.push_str("{\"rle\":[");
            for (k, run) in rle.rle.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{run}").unwrap();
            }
            write!(out, "],\"width\":{},\"height\":{}}}", rle.width, rle.height).unwrap();
        }
    }
}

fn write_instance(out: &mut String, inst: &ObjectInstance) {
    write!(
        out,
        "{{\"id\":{},\"category\":{},\"attributes\":[",
        inst.id,
        quote(&inst.category)
    )
    .unwrap();
    for (k, attr) in inst.attributes.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        out.push_str(&quote(attr));
    }
    out.push_str("],\"mask_ref\":");
    write_mask(out, &inst.mask_ref);
    let s = &inst.spatial;
    write!(
        out,
        ",\"spatial\":{{\"x\":{},\"y\":{},\"depth\":{},\"size\":{}}}}}",
        format_decimal(s.x),
        format_decimal(s.y),
        format_decimal(s.depth),
        format_decimal(s.size)
    )
    .unwrap();
}

/// Writes the canonical document: fixed key order, frames by index,
/// instances by id, numbers with at most six fractional digits.
pub fn serialize_twin(twin: &VideoTwin) -> String {
    let mut out = String::with_capacity(256 * twin.frames.len().max(1));
    write!(out, "{{\"frame_count\":{},\"metadata\":{{", twin.frame_count).unwrap();
    for (k, (key, value)) in twin.metadata.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        write!(out, "{}:{}", quote(key), quote(value)).unwrap();
    }
    out.push_str("},\"frames\":[");
    let mut frames: Vec<_> = twin.frames.iter().collect();
    frames.sort_by_key(|f| f.frame_index);
    for (k, frame) in frames.into_iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        write!(out, "{{\"frame_index\":{},\"instances\":[", frame.frame_index).unwrap();
        let mut instances: Vec<_> = frame.instances.iter().collect();
        instances.sort_by_key(|o| o.id);
        for (j, inst) in instances.into_iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write_instance(&mut out, inst);
        }
        out.push_str("]}");
    }
    out.push_str("]}");
    out
}

/// Canonical JSON value of a single instance.
pub fn instance_to_json(inst: &ObjectInstance) -> Value {
    let mut out = String::new();
    write_instance(&mut out, inst);
    serde_json::from_str(&out).expect("canonical instance is valid JSON")
}
