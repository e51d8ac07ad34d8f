//! Simulation and reconstruction toolkit for phase-sensitive computational
//! ghost imaging with x-rays.
//!
//! The crate models a near-field phase-contrast experiment in which a set
//! of amplitude masks (1D gratings or binary speckles) encodes a sample and
//! a bucket, or a row of "mailbox" detectors, records one number per mask
//! position. Two acquisition orderings are supported:
//!
//! * **structured illumination**: mask upstream of the sample. The bucket
//!   integrates the propagated sample image and loses all phase contrast.
//! * **structured detection**: mask placed in the sample's image plane. The
//!   bucket sees the propagated intensity pattern, fringes included.
//!
//! Module map:
//!
//! * [`fields`]: rasters, regions, profiles and the GIR1 file format
//! * [`phantom`]: materials and projected-thickness phantoms
//! * [`optics`]: contact images, the TIE operator, a Fresnel propagator
//! * [`mask`]: gratings, speckles and scan schedules
//! * [`acquisition`]: forward models and bucket/mailbox integration
//! * [`recon`]: ghost synthesis, flat-field normalisation, PSF and FWHM,
//!   stitching
//!
//! ```
//! use phasegi::fields::{Grid2D, ScalarField2D};
//! use phasegi::optics::{contact_image, tie_image, LaplacianMode, PropagationSpec};
//! use phasegi::phantom::{edge_phantom, Material};
//! use phasegi::fields::Axis;
//!
//! let grid = Grid2D::square(128, 8, 2e-6).unwrap();
//! let al = Material::from_energy_kev(1.51e-6, 5.6e-9, 19.0).unwrap();
//! let t = edge_phantom(&grid, 20e-6, Axis::Horizontal, 128e-6, 6e-6).unwrap();
//! let flat = ScalarField2D::constant(grid, 1.0).unwrap();
//!
//! let contact = contact_image(&al, &t, &flat).unwrap();
//! let prop = PropagationSpec::new(0.05, LaplacianMode::SpectralPeriodic).unwrap();
//! let image = tie_image(&al, &t, &flat, &prop).unwrap();
//! // Free-space propagation redistributes intensity but keeps its mean.
//! assert!((image.field.mean() - contact.mean()).abs() < 1e-12);
//! ```

pub mod acquisition;
pub mod error;
mod fft;
pub mod fields;
pub mod mask;
pub mod optics;
pub mod phantom;
pub mod recon;
mod rng;

pub use error::{Error, Result};
