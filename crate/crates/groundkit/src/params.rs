//! Parameter files: a JSON object of named arrays with shapes,
//! `{"w_q": {"shape": [r, c], "values": [...]}, ...}`, in parameter order.

use std::fmt;
use std::path::Path;

use groundkit_core::aligner::{Matrix, ParamSet};
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::io;

#[derive(Serialize, Deserialize)]
struct ArrayRecord {
    shape: [usize; 2],
    values: Vec<f64>,
}

struct ParamsRef<'a>(&'a ParamSet);

impl Serialize for ParamsRef<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (name, m) in self.0.iter() {
            map.serialize_entry(
                name,
                &ArrayRecord {
                    shape: [m.rows(), m.cols()],
                    values: m.data().to_vec(),
                },
            )?;
        }
        map.end()
    }
}

struct Params(ParamSet);

impl<'de> Deserialize<'de> for Params {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Params;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of named arrays")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<Params, A::Error> {
                let mut p = ParamSet::new();
                while let Some((name, rec)) = map.next_entry::<String, ArrayRecord>()? {
                    if p.get(&name).is_ok() {
                        return Err(serde::de::Error::custom(format!(
                            "duplicate parameter {name:?}"
                        )));
                    }
                    let m = Matrix::new(rec.shape[0], rec.shape[1], rec.values)
                        .map_err(|e| serde::de::Error::custom(format!("{name}: {e}")))?;
                    p.insert(&name, m);
                }
                Ok(Params(p))
            }
        }
        d.deserialize_map(V)
    }
}

pub fn params_to_json(p: &ParamSet) -> String {
    io::to_json_pretty(&ParamsRef(p))
}

pub fn params_from_json(path: &Path, text: &str) -> Result<ParamSet> {
    serde_json::from_str::<Params>(text)
        .map(|p| p.0)
        .map_err(|e| Error::format(path, e.line(), e))
}

pub fn save_params(p: &ParamSet, path: &Path) -> Result<()> {
    io::write_atomic(path, params_to_json(p).as_bytes())
}

pub fn load_params(path: &Path) -> Result<ParamSet> {
    params_from_json(path, &io::read_to_string(path)?)
}
