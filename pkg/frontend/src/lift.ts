/** The only client-side model math: the linear lift from the 2-D map
 * back to the full latent space, `z = center + x·basis[0] + y·basis[1]`,
 * using the basis and center the service provided.
 */

export interface LiftSpec {
  basis: number[][];
  center: number[];
}

export function liftCoords(spec: LiftSpec, coords: readonly [number, number]): number[] {
  const [bx, by] = spec.basis;
  if (spec.basis.length !== 2 || !bx || !by) {
    throw new Error(`lift needs a rank-2 basis, got ${spec.basis.length} rows`);
  }
  if (bx.length !== spec.center.length || by.length !== spec.center.length) {
    throw new Error("basis rows and center disagree on latent dimension");
  }
  return spec.center.map((c, j) => c + coords[0] * (bx[j] ?? 0) + coords[1] * (by[j] ?? 0));
}
