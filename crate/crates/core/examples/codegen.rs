//! Emits OpenCL and CUDA kernels for the top-ranked tiling and writes them
//! with their manifests to a directory (default: ./kernels).

use femtile::codegen::{emit_mlt, emit_scpt, CodegenOptions, Dialect};
use femtile::form::{preset_map, preset_signature, Operator};
use femtile::search::{rank, SearchConfig};
use femtile::{DeviceSpec, Schedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "kernels".into()));
    std::fs::create_dir_all(&out)?;
    let sig = preset_signature(Operator::Laplace, 3, 2, 14)?;
    let dev = DeviceSpec::k40();
    let best = rank(&sig, &dev, &SearchConfig::default())?.remove(0);
    let Schedule::Mlt(params) = &best.schedule else { unreachable!() };
    println!("tiling {}", params.label());
    for dialect in [Dialect::OpenCl, Dialect::Cuda] {
        let opts = CodegenOptions { dialect, map: Some(preset_map(Operator::Laplace, &sig)?), device: Some(dev.clone()) };
        for k in [emit_mlt(&sig, params, &opts)?, emit_scpt(&sig, &opts)] {
            let path = out.join(k.file_name());
            std::fs::write(&path, &k.source)?;
            std::fs::write(out.join(format!("{}.{}.manifest.yaml", k.entry, dialect.extension())), k.manifest_yaml())?;
            println!("  {}: {} lines, {} barriers, B = {:?} words", path.display(), k.source.lines().count(), k.barrier_calls(), k.buffer_b_words());
        }
    }
    Ok(())
}
