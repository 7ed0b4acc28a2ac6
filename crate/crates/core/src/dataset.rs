//! Named image sets and their on-disk form (a directory of `.ppm` files).

use crate::raster::{read_ppm, write_ppm, PpmError, Raster};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Ppm {
        path: PathBuf,
        #[source]
        source: PpmError,
    },
    #[error("{0}: no .ppm images found")]
    Empty(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedImage {
    /// File name including the `.ppm` extension; the key used by oracle tables.
    pub name: String,
    pub image: Raster,
}

impl NamedImage {
    pub fn new(name: impl Into<String>, image: Raster) -> Self {
        Self {
            name: name.into(),
            image,
        }
    }

    /// Name without the `.ppm` extension.
    pub fn stem(&self) -> &str {
        self.name.strip_suffix(".ppm").unwrap_or(&self.name)
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads every `*.ppm` file in `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<NamedImage>, DatasetError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "ppm") {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(DatasetError::Empty(dir.to_path_buf()));
    }
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let image = read_ppm(&bytes).map_err(|source| DatasetError::Ppm {
                path: path.clone(),
                source,
            })?;
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(NamedImage { name, image })
        })
        .collect()
}

pub fn write_image(dir: &Path, name: &str, image: &Raster) -> Result<PathBuf, DatasetError> {
    let path = dir.join(name);
    fs::write(&path, write_ppm(image)).map_err(io_err(&path))?;
    Ok(path)
}

pub fn save_dir(dir: &Path, images: &[NamedImage]) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for img in images {
        write_image(dir, &img.name, &img.image)?;
    }
    Ok(())
}
