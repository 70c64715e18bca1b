//! Template-generated TwinQL programs paired with brute-force answers.
//!
//! The expected value of each program is computed straight from the twin's
//! frames, without the parser or evaluator.

use rand::seq::IndexedRandom;
use rand::Rng;
use river_core::twin::{ObjectInstance, VideoTwin};
use river_core::twinql::Value;

use crate::twin_gen::{ATTRIBUTES, CATEGORIES};

#[derive(Debug, Clone, PartialEq)]
pub enum Expected {
    Value(Value),
    /// Error class: "frame_out_of_range", "missing_object" or "type_error".
    Error(&'static str),
}

#[derive(Debug, Clone)]
pub struct OracleCase {
    pub program: String,
    pub expected: Expected,
}

const FIELDS: [&str; 4] = ["x", "y", "depth", "size"];

fn field(o: &ObjectInstance, name: &str) -> f64 {
    match name {
        "x" => o.spatial.x,
        "y" => o.spatial.y,
        "depth" => o.spatial.depth,
        "size" => o.spatial.size,
        _ => unreachable!("unknown field {name}"),
    }
}

fn frame_objects(twin: &VideoTwin, t: usize) -> Option<Vec<&ObjectInstance>> {
    let frame = twin.frames.get(t)?;
    let mut objs: Vec<&ObjectInstance> = frame.instances.iter().collect();
    objs.sort_by_key(|o| o.id);
    Some(objs)
}

fn objref(t: usize, o: &ObjectInstance) -> Value {
    Value::ObjRef { frame: t, id: o.id }
}

/// The object no other object beats: strictly better key, or equal key and
/// smaller id.
fn pairwise_best<'a>(
    objs: &[&'a ObjectInstance],
    key: impl Fn(&ObjectInstance) -> f64,
    max: bool,
) -> Option<&'a ObjectInstance> {
    objs.iter()
        .find(|o| {
            objs.iter().all(|p| {
                let (ko, kp) = (key(o), key(p));
                let strictly = if max { ko > kp } else { ko < kp };
                o.id == p.id || strictly || (ko == kp && o.id < p.id)
            })
        })
        .copied()
}

fn pick_frame<R: Rng>(rng: &mut R, twin: &VideoTwin) -> usize {
    if rng.random_bool(0.1) {
        twin.frames.len() + rng.random_range(0..3)
    } else {
        rng.random_range(0..twin.frames.len())
    }
}

fn pick_id<R: Rng>(rng: &mut R, twin: &VideoTwin, t: usize) -> u64 {
    match twin.frames.get(t).map(|f| &f.instances) {
        Some(objs) if !objs.is_empty() && rng.random_bool(0.85) => objs.choose(rng).expect("non-empty").id,
        _ => rng.random_range(0..20),
    }
}

fn lookup(twin: &VideoTwin, t: usize, id: u64) -> Result<&ObjectInstance, Expected> {
    let frame = twin.frames.get(t).ok_or(Expected::Error("frame_out_of_range"))?;
    frame
        .instances
        .iter()
        .find(|o| o.id == id)
        .ok_or(Expected::Error("missing_object"))
}

fn unwrap_case(r: Result<Expected, Expected>) -> Expected {
    r.unwrap_or_else(|e| e)
}

pub fn generate_case<R: Rng>(rng: &mut R, twin: &VideoTwin) -> OracleCase {
    let template = rng.random_range(0..15);
    let t = pick_frame(rng, twin);
    let objs = frame_objects(twin, t);
    let oob = Expected::Error("frame_out_of_range");
    let f = *FIELDS.choose(rng).expect("non-empty");
    let (program, expected) = match template {
        0 => (
            format!("count(objects(frame={t}))"),
            objs.map_or(oob, |o| Expected::Value(Value::Int(o.len() as i64))),
        ),
        1 => {
            let id = pick_id(rng, twin, t);
            let accessor = *["x", "y", "depth", "size", "category", "id"]
                .choose(rng)
                .expect("non-empty");
            let expected = unwrap_case(lookup(twin, t, id).map(|o| {
                Expected::Value(match accessor {
                    "category" => Value::Str(o.category.clone()),
                    "id" => Value::Int(o.id as i64),
                    name => Value::Float(field(o, name)),
                })
            }));
            (format!("{accessor}(obj({t}, {id}))"), expected)
        }
        2 => {
            let (i, j) = (pick_id(rng, twin, t), pick_id(rng, twin, t));
            let expected = unwrap_case(lookup(twin, t, i).and_then(|a| {
                lookup(twin, t, j).map(|b| {
                    Expected::Value(Value::Float(
                        (a.spatial.x - b.spatial.x).hypot(a.spatial.y - b.spatial.y),
                    ))
                })
            }));
            (format!("distance(obj({t}, {i}), obj({t}, {j}))"), expected)
        }
        3 => {
            let (name, key, max) = *[
                ("leftmost", "x", false),
                ("rightmost", "x", true),
                ("nearest", "depth", false),
                ("farthest", "depth", true),
                ("smallest", "size", false),
                ("largest", "size", true),
            ]
            .choose(rng)
            .expect("non-empty");
            let expected = match objs {
                None => oob,
                Some(o) => match pairwise_best(&o, |p| field(p, key), max) {
                    Some(best) => Expected::Value(objref(t, best)),
                    None => Expected::Error("type_error"),
                },
            };
            (format!("{name}(objects(frame={t}))"), expected)
        }
        4 => {
            let id = rng.random_range(0..20u64);
            let frames = (0..twin.frames.len())
                .filter(|&k| twin.frames[k].instances.iter().any(|o| o.id == id))
                .map(|k| Value::Int(k as i64))
                .collect();
            (format!("frames_present({id})"), Expected::Value(Value::List(frames)))
        }
        5 => {
            let t2 = pick_frame(rng, twin);
            let id = pick_id(rng, twin, t);
            let expected = if t >= twin.frames.len() || t2 >= twin.frames.len() {
                oob
            } else {
                unwrap_case(lookup(twin, t, id).and_then(|a| {
                    lookup(twin, t2, id).map(|b| {
                        let (dx, dy) = (a.spatial.x - b.spatial.x, a.spatial.y - b.spatial.y);
                        Expected::Value(Value::Float((dx * dx + dy * dy).sqrt()))
                    })
                }))
            };
            (format!("displacement({id}, {t}, {t2})"), expected)
        }
        6 => {
            let th = rng.random_range(0..=10) as f64 / 10.0;
            let expected = objs.map_or(oob, |o| {
                Expected::Value(Value::List(
                    o.iter()
                        .filter(|p| field(p, f) > th)
                        .map(|p| Value::Int(p.id as i64))
                        .collect(),
                ))
            });
            (
                format!("[id(o) for o in objects(frame={t}) if {f}(o) > {th:?}]"),
                expected,
            )
        }
        7 => {
            let c = *CATEGORIES.choose(rng).expect("non-empty");
            let n = twin
                .frames
                .iter()
                .flat_map(|fr| &fr.instances)
                .filter(|o| o.category == c)
                .count();
            (
                format!("count(filter(objects(), lambda o: category(o) == \"{c}\"))"),
                Expected::Value(Value::Int(n as i64)),
            )
        }
        8 => {
            let max = rng.random_bool(0.5);
            let name = if max { "max_by" } else { "min_by" };
            let expected = match objs {
                None => oob,
                Some(o) => match pairwise_best(&o, |p| field(p, f), max) {
                    Some(best) => Expected::Value(objref(t, best)),
                    None => Expected::Error("type_error"),
                },
            };
            (format!("{name}(objects(frame={t}), key={f})"), expected)
        }
        9 => {
            let expected = objs.map_or(oob, |mut o| {
                // insertion sort by (key, id)
                for k in 1..o.len() {
                    let mut m = k;
                    while m > 0 && (field(o[m - 1], f), o[m - 1].id) > (field(o[m], f), o[m].id) {
                        o.swap(m - 1, m);
                        m -= 1;
                    }
                }
                Expected::Value(Value::List(o.iter().map(|p| Value::Int(p.id as i64)).collect()))
            });
            (
                format!("[id(o) for o in sort_by(objects(frame={t}), key=lambda o: {f}(o))]"),
                expected,
            )
        }
        10 => {
            let expected = objs.map_or(oob, |o| {
                if o.is_empty() {
                    Expected::Value(Value::Int(0))
                } else {
                    Expected::Value(Value::Float(o.iter().map(|p| p.spatial.size).sum()))
                }
            });
            (format!("sum([size(o) for o in objects(frame={t})])"), expected)
        }
        11 => {
            let a = *ATTRIBUTES.choose(rng).expect("non-empty");
            let n = twin
                .frames
                .iter()
                .flat_map(|fr| &fr.instances)
                .filter(|o| o.attributes.iter().any(|x| x == a))
                .count();
            (
                format!("count([o for o in objects() if has_attribute(o, '{a}')])"),
                Expected::Value(Value::Int(n as i64)),
            )
        }
        12 => {
            let id = pick_id(rng, twin, t);
            let g = *FIELDS.choose(rng).expect("non-empty");
            let k = rng.random_range(-3..=3i64);
            let expected = unwrap_case(
                lookup(twin, t, id).map(|o| Expected::Value(Value::Float(field(o, f) + field(o, g) * k as f64))),
            );
            (format!("{f}(obj({t}, {id})) + {g}(obj({t}, {id})) * {k}"), expected)
        }
        13 => {
            let expected = objs.map_or(oob, |o| {
                if o.is_empty() {
                    Expected::Error("type_error")
                } else {
                    Expected::Value(Value::Float(
                        o.iter().map(|p| field(p, f)).sum::<f64>() / o.len() as f64,
                    ))
                }
            });
            (format!("mean([{f}(o) for o in objects(frame={t})])"), expected)
        }
        _ => {
            let mut seen: Vec<&str> = Vec::new();
            for o in twin.frames.iter().flat_map(|fr| &fr.instances) {
                if !seen.contains(&o.category.as_str()) {
                    seen.push(&o.category);
                }
            }
            (
                "count(unique([category(o) for o in objects()]))".to_string(),
                Expected::Value(Value::Int(seen.len() as i64)),
            )
        }
    };
    OracleCase { program, expected }
}

/// Structural equality with floats compared within `tol`.
pub fn values_match(a: &Value, b: &Value, tol: f64) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => (x - y).abs() <= tol,
        (Value::List(xs), Value::List(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| values_match(x, y, tol))
        }
        _ => a == b,
    }
}
