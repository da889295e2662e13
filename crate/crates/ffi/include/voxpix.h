#ifndef VOXPIX_H
#define VOXPIX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VoxpixStatus {
  VOXPIX_STATUS_OK = 0,
  VOXPIX_STATUS_NULL_POINTER = 1,
  // Invalid argument or configuration.
  VOXPIX_STATUS_ARGUMENT = 2,
  // Missing or malformed input data.
  VOXPIX_STATUS_DATA = 3,
  // Non-finite values.
  VOXPIX_STATUS_NUMERIC = 4,
  // Internal failure; the handle arguments are left untouched.
  VOXPIX_STATUS_PANIC = 5,
} VoxpixStatus;

typedef struct VoxpixMesh VoxpixMesh;

typedef struct VoxpixModel VoxpixModel;

typedef struct VoxpixScene VoxpixScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *voxpix_last_error(void);

// Huber loss of one residual.
double voxpix_huber(double residual, double delta);

// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum VoxpixStatus voxpix_mesh_read_obj(const char *path, struct VoxpixMesh **out);

// # Safety
// `mesh` must come from this library; `path` must be NUL-terminated.
enum VoxpixStatus voxpix_mesh_write_obj(const struct VoxpixMesh *mesh, const char *path);

// # Safety
// `mesh` must come from this library or be NULL.
void voxpix_mesh_free(struct VoxpixMesh *mesh);

// Vertex count, or 0 for NULL.
//
// # Safety
// `mesh` must come from this library or be NULL.
size_t voxpix_mesh_vertex_count(const struct VoxpixMesh *mesh);

// Triangle count, or 0 for NULL.
//
// # Safety
// `mesh` must come from this library or be NULL.
size_t voxpix_mesh_triangle_count(const struct VoxpixMesh *mesh);

// Copies up to `capacity` vertices as packed xyz triples into `xyz`.
//
// # Safety
// `xyz` must hold `3 * capacity` doubles.
enum VoxpixStatus voxpix_mesh_vertices(const struct VoxpixMesh *mesh, double *xyz, size_t capacity);

// Writes 1 to `out` when every edge is shared by exactly two triangles.
//
// # Safety
// `mesh` must come from this library; `out` must be writable.
enum VoxpixStatus voxpix_mesh_is_closed(const struct VoxpixMesh *mesh, int32_t *out);

// Signed distances (negative inside) of `n` packed xyz points to a
// watertight mesh.
//
// # Safety
// `xyz` must hold `3 * n` doubles and `out` `n` doubles.
enum VoxpixStatus voxpix_signed_distance(const struct VoxpixMesh *mesh,
                                         const double *xyz,
                                         size_t n,
                                         double *out);

// Symmetric Chamfer distance between two meshes.
//
// # Safety
// Both meshes must come from this library; `out` must be writable.
enum VoxpixStatus voxpix_chamfer(const struct VoxpixMesh *a,
                                 const struct VoxpixMesh *b,
                                 size_t n_samples,
                                 uint64_t seed,
                                 double *out);

// Mean distance from samples of `recon` to the surface of `gt`.
//
// # Safety
// Both meshes must come from this library; `out` must be writable.
enum VoxpixStatus voxpix_p2s(const struct VoxpixMesh *recon,
                             const struct VoxpixMesh *gt,
                             size_t n_samples,
                             uint64_t seed,
                             double *out);

// Marching cubes over `nx * ny * nz` samples (x fastest) at cell centers
// `origin + (i + 0.5) * spacing`.
//
// # Safety
// `values` must hold `nx * ny * nz` doubles and `origin` three.
enum VoxpixStatus voxpix_marching_cubes(const double *values,
                                        size_t nx,
                                        size_t ny,
                                        size_t nz,
                                        const double *origin,
                                        double spacing,
                                        double iso,
                                        struct VoxpixMesh **out);

// # Safety
// `path` must be NUL-terminated and `out` writable.
enum VoxpixStatus voxpix_model_load(const char *path, struct VoxpixModel **out);

// # Safety
// `model` must come from this library or be NULL.
void voxpix_model_free(struct VoxpixModel *model);

// Number of learnable scalars, or 0 for NULL.
//
// # Safety
// `model` must come from this library or be NULL.
size_t voxpix_model_param_count(const struct VoxpixModel *model);

// Loads a scene directory written by `voxpix genscene`.
//
// # Safety
// `dir` must be NUL-terminated and `out` writable.
enum VoxpixStatus voxpix_scene_load(const char *dir, struct VoxpixScene **out);

// # Safety
// `scene` must come from this library or be NULL.
void voxpix_scene_free(struct VoxpixScene *scene);

// Ground-truth mesh of a scene as a new handle.
//
// # Safety
// `scene` must come from this library; `out` must be writable.
enum VoxpixStatus voxpix_scene_mesh(const struct VoxpixScene *scene, struct VoxpixMesh **out);

// Reconstructs view `view_index` of `scene` on an inference grid of about
// `m_resolution^3` cells padded by `grid_pad`.
//
// # Safety
// Handles must come from this library; `out` must be writable.
enum VoxpixStatus voxpix_reconstruct(const struct VoxpixModel *model,
                                     const struct VoxpixScene *scene,
                                     size_t view_index,
                                     size_t m_resolution,
                                     double grid_pad,
                                     struct VoxpixMesh **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOXPIX_H */
