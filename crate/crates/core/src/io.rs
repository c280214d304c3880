//! JSON instance files.
//!
//! ```json
//! {"branching": 2, "depth": 1, "exponents": [2.0, 2.0],
//!  "measures": [[1.0, 1.0], [1.0, 1.0]], "kernel": {"0:0": 1.0}}
//! ```
//!
//! Kernel keys are `"level:index"`; absent cubes carry weight 0. Only
//! nonzero kernel entries are written, in canonical cube order.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::tree::{CubeId, DyadicTree, Instance, Kernel, Measure};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    branching: usize,
    depth: usize,
    exponents: Vec<f64>,
    measures: Vec<Vec<f64>>,
    #[serde(default)]
    kernel: Map<String, Value>,
}

pub fn instance_to_value(instance: &Instance) -> Value {
    let tree = instance.tree();
    let kernel = instance
        .kernel()
        .support()
        .map(|(cube, v)| (cube.to_string(), Value::from(v)))
        .collect();
    let file = InstanceFile {
        branching: tree.branching(),
        depth: tree.depth(),
        exponents: instance.exponents().to_vec(),
        measures: instance
            .measures()
            .iter()
            .map(|m| m.leaf_masses().to_vec())
            .collect(),
        kernel,
    };
    serde_json::to_value(file).expect("instance serializes")
}

pub fn save_instance(instance: &Instance) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(&instance_to_value(instance))
        .expect("instance serializes");
    bytes.push(b'\n');
    bytes
}

pub fn instance_from_value(value: Value) -> Result<Instance> {
    let file: InstanceFile =
        serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    build(file)
}

pub fn load_instance(bytes: &[u8]) -> Result<Instance> {
    let file: InstanceFile =
        serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))?;
    build(file)
}

fn build(file: InstanceFile) -> Result<Instance> {
    let tree = DyadicTree::new(file.branching, file.depth)?;
    let measures = file
        .measures
        .into_iter()
        .map(|masses| Measure::new(tree, masses))
        .collect::<Result<Vec<_>>>()?;
    let mut kernel = Kernel::zero(tree);
    for (key, value) in file.kernel {
        let cube: CubeId = key.parse()?;
        let weight = value
            .as_f64()
            .ok_or_else(|| Error::Schema(format!("kernel entry {key:?} is not a number")))?;
        kernel.set(cube, weight)?;
    }
    Instance::new(kernel, measures, file.exponents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn round_trip_fixture() {
        let a = fixtures::fixture_a();
        let back = load_instance(&save_instance(&a)).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn rejects_negative_mass() {
        let text = br#"{"branching":2,"depth":1,"exponents":[2,2],
            "measures":[[-1,1],[1,1]],"kernel":{"0:0":1}}"#;
        let err = load_instance(text).unwrap_err();
        assert!(err.to_string().contains("negative leaf mass"), "{err}");
    }

    #[test]
    fn rejects_unit_exponent() {
        let text = br#"{"branching":2,"depth":1,"exponents":[1,2],
            "measures":[[1,1],[1,1]],"kernel":{"0:0":1}}"#;
        let err = load_instance(text).unwrap_err();
        assert!(err.to_string().contains("exponent must exceed 1"), "{err}");
    }

    #[test]
    fn rejects_malformed_input() {
        for text in [
            &br#"{"branching":2}"#[..],
            br#"{"branching":2,"depth":1,"exponents":[2],"measures":[[1,1,1]]}"#,
            br#"{"branching":2,"depth":1,"exponents":[2],"measures":[[1,1]],"kernel":{"5:0":1}}"#,
            br#"{"branching":2,"depth":1,"exponents":[2],"measures":[[1,1]],"kernel":{"root":1}}"#,
            br#"{"branching":2,"depth":1,"exponents":[2],"measures":[[1,1]],"kernel":{"0:0":"x"}}"#,
            br#"{"branching":2,"depth":1,"exponents":[2,3],"measures":[[1,1]]}"#,
            b"not json",
        ] {
            assert!(load_instance(text).is_err(), "{}", String::from_utf8_lossy(text));
        }
    }
}
