//! C ABI over the voxpix toolkit. Objects are opaque handles owned by the
//! caller and released with the matching `*_free`. Every fallible call
//! returns a [`VoxpixStatus`]; the message of the last failure on the
//! calling thread is available through [`voxpix_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use voxpix::geometry::GridSpec;
use voxpix::mesh::TriMesh;
use voxpix::nets::ReconModel;
use voxpix::reconstruct::{marching_cubes, reconstruct, GridOptions, ScalarField};
use voxpix::scene::{read_scene, LoadedScene};
use voxpix::sdf_oracle::SdfOracle;
use voxpix::{Error, Vec3};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VoxpixStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid argument or configuration.
    Argument = 2,
    /// Missing or malformed input data.
    Data = 3,
    /// Non-finite values.
    Numeric = 4,
    /// Internal failure; the handle arguments are left untouched.
    Panic = 5,
}

pub struct VoxpixMesh(TriMesh);
pub struct VoxpixModel(ReconModel);
pub struct VoxpixScene(LoadedScene);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VoxpixStatus {
    match e {
        Error::Argument(_) | Error::Config(_) => VoxpixStatus::Argument,
        Error::Io(_) | Error::Format(_) | Error::State(_) => VoxpixStatus::Data,
        Error::Numeric(_) => VoxpixStatus::Numeric,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VoxpixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VoxpixStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            VoxpixStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            VoxpixStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Error::Argument(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn voxpix_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Huber loss of one residual.
#[no_mangle]
pub extern "C" fn voxpix_huber(residual: f64, delta: f64) -> f64 {
    voxpix::training::huber(residual, delta)
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn voxpix_mesh_read_obj(path: *const c_char, out: *mut *mut VoxpixMesh) -> VoxpixStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        put(out, VoxpixMesh(voxpix::io::read_obj(path)?));
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn voxpix_mesh_write_obj(mesh: *const VoxpixMesh, path: *const c_char) -> VoxpixStatus {
    guard(|| {
        let m = get(mesh, "mesh")?;
        voxpix::io::write_obj(&m.0, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn voxpix_mesh_free(mesh: *mut VoxpixMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Vertex count, or 0 for NULL.
///
/// # Safety
/// `mesh` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn voxpix_mesh_vertex_count(mesh: *const VoxpixMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.vertices.len())
}

/// Triangle count, or 0 for NULL.
///
/// # Safety
/// `mesh` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn voxpix_mesh_triangle_count(mesh: *const VoxpixMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.triangles.len())
}

/// Copies up to `capacity` vertices as packed xyz triples into `xyz`.
///
/// # Safety
/// `xyz` must hold `3 * capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn voxpix_mesh_vertices(mesh: *const VoxpixMesh, xyz: *mut f64, capacity: usize) -> VoxpixStatus {
    guard(|| {
        let m = get(mesh, "mesh")?;
        if xyz.is_null() {
            return Err(Fail::Null("xyz"));
        }
        let n = capacity.min(m.0.vertices.len());
        let out = std::slice::from_raw_parts_mut(xyz, 3 * n);
        for (dst, v) in out.chunks_exact_mut(3).zip(&m.0.vertices) {
            dst.copy_from_slice(v.as_slice());
        }
        Ok(())
    })
}

/// Writes 1 to `out` when every edge is shared by exactly two triangles.
///
/// # Safety
/// `mesh` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn voxpix_mesh_is_closed(mesh: *const VoxpixMesh, out: *mut i32) -> VoxpixStatus {
    guard(|| {
        let m = get(mesh, "mesh")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = i32::from(m.0.is_closed_manifold());
        Ok(())
    })
}

/// Signed distances (negative inside) of `n` packed xyz points to a
/// watertight mesh.
///
/// # Safety
/// `xyz` must hold `3 * n` doubles and `out` `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn voxpix_signed_distance(
    mesh: *const VoxpixMesh,
    xyz: *const f64,
    n: usize,
    out: *mut f64,
) -> VoxpixStatus {
    guard(|| {
        let m = get(mesh, "mesh")?;
        if n > 0 && (xyz.is_null() || out.is_null()) {
            return Err(Fail::Null("points"));
        }
        if n == 0 {
            return Ok(());
        }
        let oracle = SdfOracle::new(&m.0)?;
        let pts = std::slice::from_raw_parts(xyz, 3 * n);
        let out = std::slice::from_raw_parts_mut(out, n);
        for (o, p) in out.iter_mut().zip(pts.chunks_exact(3)) {
            *o = oracle.signed_distance(&Vec3::new(p[0], p[1], p[2]));
        }
        Ok(())
    })
}

/// Symmetric Chamfer distance between two meshes.
///
/// # Safety
/// Both meshes must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn voxpix_chamfer(
    a: *const VoxpixMesh,
    b: *const VoxpixMesh,
    n_samples: usize,
    seed: u64,
    out: *mut f64,
) -> VoxpixStatus {
    guard(|| {
        let (a, b) = (get(a, "a")?, get(b, "b")?);
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = voxpix::metrics::chamfer(&a.0, &b.0, n_samples, seed)?;
        Ok(())
    })
}

/// Mean distance from samples of `recon` to the surface of `gt`.
///
/// # Safety
/// Both meshes must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn voxpix_p2s(
    recon: *const VoxpixMesh,
    gt: *const VoxpixMesh,
    n_samples: usize,
    seed: u64,
    out: *mut f64,
) -> VoxpixStatus {
    guard(|| {
        let (a, b) = (get(recon, "recon")?, get(gt, "gt")?);
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = voxpix::metrics::p2s(&a.0, &b.0, n_samples, seed)?;
        Ok(())
    })
}

/// Marching cubes over `nx * ny * nz` samples (x fastest) at cell centers
/// `origin + (i + 0.5) * spacing`.
///
/// # Safety
/// `values` must hold `nx * ny * nz` doubles and `origin` three.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn voxpix_marching_cubes(
    values: *const f64,
    nx: usize,
    ny: usize,
    nz: usize,
    origin: *const f64,
    spacing: f64,
    iso: f64,
    out: *mut *mut VoxpixMesh,
) -> VoxpixStatus {
    guard(|| {
        if values.is_null() || origin.is_null() || out.is_null() {
            return Err(Fail::Null("values, origin or out"));
        }
        let o = std::slice::from_raw_parts(origin, 3);
        let spec = GridSpec::new(Vec3::new(o[0], o[1], o[2]), spacing, [nx, ny, nz])?;
        let vals = std::slice::from_raw_parts(values, spec.len()).to_vec();
        put(out, VoxpixMesh(marching_cubes(&ScalarField::new(spec, vals)?, iso)?));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn voxpix_model_load(path: *const c_char, out: *mut *mut VoxpixModel) -> VoxpixStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        put(out, VoxpixModel(voxpix::training::load_checkpoint(path)?.0));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn voxpix_model_free(model: *mut VoxpixModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of learnable scalars, or 0 for NULL.
///
/// # Safety
/// `model` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn voxpix_model_param_count(model: *const VoxpixModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.param_count())
}

/// Loads a scene directory written by `voxpix genscene`.
///
/// # Safety
/// `dir` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn voxpix_scene_load(dir: *const c_char, out: *mut *mut VoxpixScene) -> VoxpixStatus {
    guard(|| {
        let dir = path_arg(dir, "dir")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        put(out, VoxpixScene(read_scene(&dir)?));
        Ok(())
    })
}

/// # Safety
/// `scene` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn voxpix_scene_free(scene: *mut VoxpixScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Ground-truth mesh of a scene as a new handle.
///
/// # Safety
/// `scene` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn voxpix_scene_mesh(scene: *const VoxpixScene, out: *mut *mut VoxpixMesh) -> VoxpixStatus {
    guard(|| {
        let s = get(scene, "scene")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        put(out, VoxpixMesh(s.0.mesh.clone()));
        Ok(())
    })
}

/// Reconstructs view `view_index` of `scene` on an inference grid of about
/// `m_resolution^3` cells padded by `grid_pad`.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn voxpix_reconstruct(
    model: *const VoxpixModel,
    scene: *const VoxpixScene,
    view_index: usize,
    m_resolution: usize,
    grid_pad: f64,
    out: *mut *mut VoxpixMesh,
) -> VoxpixStatus {
    guard(|| {
        let (m, s) = (get(model, "model")?, get(scene, "scene")?);
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let v = s
            .0
            .views
            .get(view_index)
            .ok_or_else(|| Error::Argument(format!("view {view_index} out of range")))?;
        let opts = GridOptions { pad: grid_pad, ..GridOptions::default() };
        put(out, VoxpixMesh(reconstruct(&m.0, &v.rgb, &v.normals, &v.depth, &v.cam, m_resolution, &opts)?));
        Ok(())
    })
}
