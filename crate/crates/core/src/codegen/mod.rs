//! Kernel source emission for the single-cell and tiled schedules.

mod emit;
mod golden;

use serde::{Deserialize, Serialize};

use crate::form::PointwiseMap;
use crate::perf::DeviceSpec;
use crate::qoi::QoiError;
use crate::sim::SimError;

pub use emit::{emit_mlt, emit_scpt};
pub use golden::{golden_check, write_golden, GoldenError};

#[derive(Debug, thiserror::Error)]
pub enum CodegenError {
    #[error("infeasible: kernel needs {needed} bytes of local memory, device '{device}' offers {limit}")]
    Infeasible { needed: u64, limit: u64, device: String },
    #[error(transparent)]
    Plan(#[from] SimError),
    #[error(transparent)]
    Qoi(#[from] QoiError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    #[default]
    OpenCl,
    Cuda,
}

impl Dialect {
    pub fn barrier(self) -> &'static str {
        match self {
            Dialect::OpenCl => "barrier(CLK_LOCAL_MEM_FENCE);",
            Dialect::Cuda => "__syncthreads();",
        }
    }

    pub fn atomic_add(self) -> &'static str {
        match self {
            Dialect::OpenCl => "atomic_add_real",
            Dialect::Cuda => "atomicAdd",
        }
    }

    pub fn local_qualifier(self) -> &'static str {
        match self {
            Dialect::OpenCl => "__local",
            Dialect::Cuda => "__shared__",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Dialect::OpenCl => "cl",
            Dialect::Cuda => "cu",
        }
    }
}

impl std::str::FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "opencl" | "cl" => Ok(Dialect::OpenCl),
            "cuda" | "cu" => Ok(Dialect::Cuda),
            _ => Err(format!("unknown dialect '{s}' (expected opencl or cuda)")),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct CodegenOptions {
    pub dialect: Dialect,
    /// Pointwise maps to inline; without one the kernel declares a
    /// `pointwise` prototype for the caller to supply.
    pub map: Option<PointwiseMap>,
    /// Checked against the kernel's local memory when present.
    pub device: Option<DeviceSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgRole {
    TrialDofs,
    Coordinates,
    Map,
    Reference,
    Output,
    Scalar,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    pub role: ArgRole,
    pub element_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchGeometry {
    /// `[dim0, dim1]` work-items per work-group.
    pub local_size: [usize; 2],
    pub cells_per_workgroup: usize,
}

impl LaunchGeometry {
    pub fn workgroups(&self, n_cell: usize) -> usize {
        n_cell.div_ceil(self.cells_per_workgroup)
    }

    pub fn formula(&self) -> String {
        format!("ceil(N_cell / {}) work-groups of {} x {}", self.cells_per_workgroup, self.local_size[0], self.local_size[1])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSource {
    pub entry: String,
    pub dialect: Dialect,
    pub source: String,
    pub launch: LaunchGeometry,
    /// Kernel parameters in declaration order.
    pub manifest: Vec<ArgSpec>,
}

impl KernelSource {
    pub fn file_name(&self) -> String {
        format!("{}.{}", self.entry, self.dialect.extension())
    }

    /// Structured-text sidecar describing the launch and the arguments.
    pub fn manifest_yaml(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            format_version: u32,
            entry: &'a str,
            dialect: Dialect,
            launch: &'a LaunchGeometry,
            grid: String,
            arguments: &'a [ArgSpec],
        }
        serde_yaml::to_string(&Sidecar {
            format_version: 1,
            entry: &self.entry,
            dialect: self.dialect,
            launch: &self.launch,
            grid: self.launch.formula(),
            arguments: &self.manifest,
        })
        .expect("manifest serializes")
    }

    /// Static barrier call sites in the source.
    pub fn barrier_calls(&self) -> usize {
        self.source.matches(self.dialect.barrier()).count()
    }

    /// Static atomic-add call sites in the source.
    pub fn atomic_calls(&self) -> usize {
        self.source.matches(&format!("{}(&", self.dialect.atomic_add())).count()
    }

    /// Size of the declared `B` buffer, if any.
    pub fn buffer_b_words(&self) -> Option<usize> {
        let head = format!("{} real_t B[", self.dialect.local_qualifier());
        let at = self.source.find(&head)? + head.len();
        let end = self.source[at..].find(']')?;
        self.source[at..at + end].parse().ok()
    }
}
