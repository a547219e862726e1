//! In-memory datasets decoded from a manifest.

use std::fs;
use std::path::Path;

use crate::data::batch::apply_mask;
use crate::data::manifest::{load_manifest, resolve, SampleRecord, Split};
use crate::data::pnm::{decode_pgm, decode_ppm, CodecError};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Require {
    Masks,
    Labels,
    Nothing,
}

/// Decoded records of one split. Images are 1×3×H×W, masks 1×1×H×W.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub records: Vec<SampleRecord>,
    pub images: Vec<Tensor<T>>,
    pub masks: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Dataset<T> {
    /// Loads every record of `split`, checking requirements before decoding anything.
    pub fn load(manifest: &Path, split: Split, require: Require, class_count: Option<usize>) -> Result<Self> {
        let records: Vec<SampleRecord> =
            load_manifest(manifest, class_count)?.into_iter().filter(|r| r.split == split).collect();
        if records.is_empty() {
            return Err(Error::invalid(format!("{}: no {split} records", manifest.display())));
        }
        for r in &records {
            let missing = match require {
                Require::Masks => r.mask_path.is_none().then_some("mask"),
                Require::Labels => r.label.is_none().then_some("label"),
                Require::Nothing => None,
            };
            if let Some(what) = missing {
                return Err(Error::invalid(format!("record `{}` has no {what}", r.image_path.display())));
            }
        }
        let mut images = Vec::with_capacity(records.len());
        let mut masks = Vec::with_capacity(records.len());
        for r in &records {
            let image = read_image(&resolve(manifest, &r.image_path))?;
            let mask = match &r.mask_path {
                Some(p) => {
                    let m = read_mask(&resolve(manifest, p))?;
                    if m.shape()[2..] != image.shape()[2..] {
                        return Err(Error::shape(format!(
                            "mask {} is {:?} but its image is {:?}",
                            p.display(),
                            &m.shape()[2..],
                            &image.shape()[2..]
                        )));
                    }
                    Some(m)
                }
                None => None,
            };
            if let Some(first) = images.first().map(Tensor::shape) {
                if first != image.shape() {
                    return Err(Error::shape(format!(
                        "image {} is {:?}, earlier images are {:?}",
                        r.image_path.display(),
                        image.shape(),
                        first
                    )));
                }
            }
            images.push(image);
            masks.push(mask);
        }
        Ok(Self { records, images, masks })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn image_batch(&self, idx: &[usize]) -> Result<Tensor<T>> {
        Tensor::stack_batch(&idx.iter().map(|&i| self.images[i].clone()).collect::<Vec<_>>())
    }

    pub fn mask_batch(&self, idx: &[usize]) -> Result<Tensor<T>> {
        let masks = idx
            .iter()
            .map(|&i| {
                self.masks[i]
                    .clone()
                    .ok_or_else(|| Error::invalid(format!("record `{}` has no mask", self.records[i].image_path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        Tensor::stack_batch(&masks)
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.records[i].label.unwrap_or(0)).collect()
    }

    /// Images with background zeroed wherever a mask is present.
    pub fn masked_image_batch(&self, idx: &[usize]) -> Result<Tensor<T>> {
        let items = idx
            .iter()
            .map(|&i| match &self.masks[i] {
                Some(m) => apply_mask(&self.images[i], m),
                None => Ok(self.images[i].clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        Tensor::stack_batch(&items)
    }
}

fn codec(path: &Path) -> impl FnOnce(CodecError) -> Error + '_ {
    move |source| Error::Codec { path: path.display().to_string(), source }
}

pub fn read_image<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let img = decode_ppm(&fs::read(path)?).map_err(codec(path))?;
    img.to_tensor::<T>().reshape(&[1, 3, img.height, img.width])
}

pub fn read_mask<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let img = decode_pgm(&fs::read(path)?).map_err(codec(path))?;
    img.to_mask::<T>()?.reshape(&[1, 1, img.height, img.width])
}
