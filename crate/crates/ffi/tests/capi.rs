use std::ffi::{CStr, CString};
use std::ptr;

use voxpix_ffi::*;

fn cstr(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn sphere_field(n: usize) -> (Vec<f64>, [f64; 3], f64) {
    let spacing = 2.0 / n as f64;
    let mut v = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let p = [i, j, k].map(|a| -1.0 + (a as f64 + 0.5) * spacing);
                v.push((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 0.5);
            }
        }
    }
    (v, [-1.0; 3], spacing)
}

#[test]
fn marching_cubes_and_mesh_queries() {
    let (vals, origin, spacing) = sphere_field(32);
    let mut mesh = ptr::null_mut();
    unsafe {
        assert_eq!(voxpix_marching_cubes(vals.as_ptr(), 32, 32, 32, origin.as_ptr(), spacing, 0.0, &mut mesh), VoxpixStatus::Ok);
        let n = voxpix_mesh_vertex_count(mesh);
        assert!(n > 0 && voxpix_mesh_triangle_count(mesh) > 0);
        let mut closed = 0;
        assert_eq!(voxpix_mesh_is_closed(mesh, &mut closed), VoxpixStatus::Ok);
        assert_eq!(closed, 1);
        let mut xyz = vec![0.0; 3 * n];
        assert_eq!(voxpix_mesh_vertices(mesh, xyz.as_mut_ptr(), n), VoxpixStatus::Ok);
        for v in xyz.chunks(3) {
            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((r - 0.5).abs() <= spacing / 2.0);
        }
        let q = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let mut d = [0.0; 2];
        assert_eq!(voxpix_signed_distance(mesh, q.as_ptr(), 2, d.as_mut_ptr()), VoxpixStatus::Ok);
        assert!(d[0] < -0.45 && (d[1] - 0.5).abs() < 0.01);
        let mut cd = -1.0;
        assert_eq!(voxpix_chamfer(mesh, mesh, 500, 1, &mut cd), VoxpixStatus::Ok);
        assert!(cd.abs() < 1e-9);
        assert_eq!(voxpix_p2s(mesh, mesh, 500, 1, &mut cd), VoxpixStatus::Ok);
        assert!(cd.abs() < 1e-9);

        let dir = tempfile::tempdir().unwrap();
        let path = cstr(&dir.path().join("m.obj"));
        assert_eq!(voxpix_mesh_write_obj(mesh, path.as_ptr()), VoxpixStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(voxpix_mesh_read_obj(path.as_ptr(), &mut back), VoxpixStatus::Ok);
        assert_eq!(voxpix_mesh_triangle_count(back), voxpix_mesh_triangle_count(mesh));
        voxpix_mesh_free(back);
        voxpix_mesh_free(mesh);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut mesh = ptr::null_mut();
        let missing = CString::new("/nonexistent/x.obj").unwrap();
        assert_eq!(voxpix_mesh_read_obj(missing.as_ptr(), &mut mesh), VoxpixStatus::Data);
        assert!(mesh.is_null());
        let msg = CStr::from_ptr(voxpix_last_error()).to_str().unwrap();
        assert!(!msg.is_empty());
        assert_eq!(voxpix_mesh_read_obj(ptr::null(), &mut mesh), VoxpixStatus::NullPointer);
        let vals = [f64::NAN; 8];
        let origin = [0.0; 3];
        assert_eq!(voxpix_marching_cubes(vals.as_ptr(), 2, 2, 2, origin.as_ptr(), 1.0, 0.0, &mut mesh), VoxpixStatus::Numeric);
        assert_eq!(voxpix_marching_cubes(vals.as_ptr(), 1, 2, 2, origin.as_ptr(), 1.0, 0.0, &mut mesh), VoxpixStatus::Argument);
        assert_eq!(voxpix_mesh_vertex_count(ptr::null()), 0);
        voxpix_mesh_free(ptr::null_mut());
        voxpix_model_free(ptr::null_mut());
        voxpix_scene_free(ptr::null_mut());
    }
    assert_eq!(voxpix_huber(2.0, 1.25), 1.71875);
}

#[test]
fn scene_model_reconstruct() {
    use voxpix::config::Config;
    use voxpix::nets::ReconModel;
    let dir = tempfile::tempdir().unwrap();
    let cfg = Config::parse("scene_kind = \"capsule\"\nmesh_cells = 24\nrender_resolution_px = 16\n").unwrap();
    voxpix::cli::cmd_genscene(&cfg, 0, &dir.path().join("s")).unwrap();
    let model_cfg = voxpix::nets::ModelConfig { lr_width: 2, hr_width: 2, vfe_base: 1, stacks: 1, mlp_hidden: vec![4], voxel_size: 0.125, ..Default::default() };
    let model = ReconModel::new(model_cfg, 0).unwrap();
    voxpix::training::save_checkpoint(&model, 0, dir.path().join("m.tnsr")).unwrap();
    unsafe {
        let (mut scene, mut m, mut out, mut gt) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(voxpix_scene_load(cstr(&dir.path().join("s")).as_ptr(), &mut scene), VoxpixStatus::Ok);
        assert_eq!(voxpix_model_load(cstr(&dir.path().join("m.tnsr")).as_ptr(), &mut m), VoxpixStatus::Ok);
        assert_eq!(voxpix_model_param_count(m), model.param_count());
        assert_eq!(voxpix_reconstruct(m, scene, 0, 16, 0.2, &mut out), VoxpixStatus::Ok);
        assert!(!out.is_null());
        assert_eq!(voxpix_reconstruct(m, scene, 3, 16, 0.2, &mut out), VoxpixStatus::Argument);
        assert_eq!(voxpix_scene_mesh(scene, &mut gt), VoxpixStatus::Ok);
        assert!(voxpix_mesh_triangle_count(gt) > 0);
        voxpix_mesh_free(gt);
        voxpix_mesh_free(out);
        voxpix_model_free(m);
        voxpix_scene_free(scene);
    }
}

#[test]
fn header_compiles_with_a_c_program() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include").join("voxpix.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["voxpix_marching_cubes", "voxpix_reconstruct", "VOXPIX_STATUS_OK", "typedef struct VoxpixMesh VoxpixMesh"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"voxpix.h\"\nint main(void) { VoxpixMesh *m = 0; double v[8] = {1,1,1,1,-1,-1,-1,-1}; double o[3] = {0,0,0};\n\
         VoxpixStatus s = voxpix_marching_cubes(v, 2, 2, 2, o, 1.0, 0.0, &m);\n\
         int ok = s == VOXPIX_STATUS_OK && voxpix_mesh_triangle_count(m) == 2; voxpix_mesh_free(m); return ok ? 0 : 1; }\n",
    )
    .unwrap();
    // syntax and type check only; linking needs the built cdylib
    let status = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(root.join("include"))
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "C compiler rejected the header"),
        Err(_) => eprintln!("no C compiler available; header content checked only"),
    }
}
