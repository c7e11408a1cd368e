//! Versioned YAML documents for signatures and problem instances.

use serde::{Deserialize, Serialize};

use super::{FormError, FormSignature, MeshConnectivity, PointwiseMap, ProblemInstance, Tabulations};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SignatureDoc {
    format_version: u32,
    signature: FormSignature,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    format_version: u32,
    signature: FormSignature,
    map: PointwiseMap,
    tabulations: Tabulations,
    mesh: MeshConnectivity,
    scalar_dofs: Vec<Vec<f64>>,
    vector_dofs: Vec<Vec<f64>>,
}

fn check_version(text: &str) -> Result<serde_yaml::Value, FormError> {
    let v: serde_yaml::Value = serde_yaml::from_str(text)?;
    match v.get("format_version").and_then(|x| x.as_u64()) {
        Some(1) => Ok(v),
        Some(other) => Err(FormError::FormatVersion(other as u32)),
        None => Err(FormError::FormatVersion(0)),
    }
}

pub fn write_signature(sig: &FormSignature) -> String {
    serde_yaml::to_string(&SignatureDoc { format_version: FORMAT_VERSION, signature: sig.clone() })
        .expect("signature serializes")
}

/// Parses a signature document; an instance document is accepted too and
/// its signature returned.
pub fn read_signature(text: &str) -> Result<FormSignature, FormError> {
    let v = check_version(text)?;
    let sig: FormSignature = serde_yaml::from_value(
        v.get("signature").cloned().ok_or_else(|| FormError::Shape("missing 'signature' block".into()))?,
    )?;
    sig.validate()?;
    Ok(sig)
}

pub fn write_instance(p: &ProblemInstance) -> String {
    let doc = InstanceDoc {
        format_version: FORMAT_VERSION,
        signature: p.signature.clone(),
        map: p.map.clone(),
        tabulations: p.tabulations.clone(),
        mesh: p.mesh.clone(),
        scalar_dofs: p.scalar_dofs.clone(),
        vector_dofs: p.vector_dofs.clone(),
    };
    serde_yaml::to_string(&doc).expect("instance serializes")
}

pub fn read_instance(text: &str) -> Result<ProblemInstance, FormError> {
    let v = check_version(text)?;
    let doc: InstanceDoc = serde_yaml::from_value(v)?;
    ProblemInstance::new(doc.signature, doc.map, doc.tabulations, doc.mesh, doc.scalar_dofs, doc.vector_dofs)
}
