//! Built-in channel-with-circle geometry written as MSH 2.2.

use std::path::Path;

use shapeopt::mesh::generate::{channel_with_circle, ChannelGeometry, GenerateError};
use shapeopt::mesh::gmsh::{write_msh22, MarkerMap};
use shapeopt::mesh::TriMesh;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenMeshError {
    #[error(transparent)]
    Geometry(#[from] GenerateError),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

/// Generates the mesh and writes it to `path`.
pub fn gen_mesh(
    geometry: &ChannelGeometry,
    markers: &MarkerMap,
    path: &Path,
) -> Result<TriMesh, GenMeshError> {
    let mesh = channel_with_circle(geometry)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| GenMeshError::Output {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
    }
    std::fs::write(path, write_msh22(&mesh, markers)).map_err(|e| GenMeshError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(mesh)
}
