/**
 * Designer session store.
 *
 * Holds the ViewState (overlay, picks, selection) plus the optimistic
 * concurrency machinery: every mutation is prepared as an Edit carrying the
 * revision it was made against; a 409 from the server triggers a refresh of
 * the client revision and a single automatic re-apply, so a concurrent
 * writer never costs the designer their picked corners or slider values.
 */
import {
  ApiClient,
  MemberRequest,
  SimulateRequest,
  StaleRevisionError,
  SurfacePick,
} from "./api";
import { Overlay } from "./overlays";
import { picksCoincident } from "./picking";

export type Edit =
  | { kind: "corners"; corners: SurfacePick[] }
  | { kind: "split"; workflow: 1 | 2 }
  | { kind: "alpha"; alpha: Record<number, number> | null }
  | { kind: "members"; req: MemberRequest }
  | { kind: "build" }
  | { kind: "simulate"; req: SimulateRequest };

export interface MeshData {
  vertices: number[][];
  faces: number[][];
  diameter: number;
}

export class PickError extends Error {}

export class SessionStore {
  api: ApiClient;
  overlay: Overlay = "none";
  picks: SurfacePick[] = [];
  activePatch = 0;
  mesh: MeshData | null = null;
  /** edits that 409ed twice and await an explicit re-apply */
  parked: Edit[] = [];
  lastResult: Record<string, unknown> | null = null;

  constructor(api: ApiClient) {
    this.api = api;
  }

  async load(): Promise<void> {
    const m = await this.api.getMesh();
    let lo = [Infinity, Infinity, Infinity];
    let hi = [-Infinity, -Infinity, -Infinity];
    for (const v of m.vertices) {
      lo = lo.map((x, k) => Math.min(x, v[k]));
      hi = hi.map((x, k) => Math.max(x, v[k]));
    }
    const diameter = Math.sqrt(
      hi.reduce((acc, x, k) => acc + (x - lo[k]) ** 2, 0),
    );
    this.mesh = { vertices: m.vertices, faces: m.faces, diameter };
  }

  setOverlay(overlay: Overlay): void {
    this.overlay = overlay;
  }

  /** add a corner pick; coincident picks are rejected client-side */
  addPick(pick: SurfacePick): void {
    if (this.mesh === null) {
      throw new PickError("mesh not loaded");
    }
    if (this.picks.length >= 4) {
      throw new PickError("already have four corners; clear first");
    }
    for (const prev of this.picks) {
      if (
        picksCoincident(
          prev,
          pick,
          this.mesh.vertices,
          this.mesh.faces,
          this.mesh.diameter,
        )
      ) {
        throw new PickError("pick coincides with an existing corner");
      }
    }
    this.picks.push(pick);
  }

  clearPicks(): void {
    this.picks = [];
  }

  /** POST the four picks as the patch corners */
  async commitCorners(): Promise<Record<string, unknown>> {
    if (this.picks.length !== 4) {
      throw new PickError(`need four picks, have ${this.picks.length}`);
    }
    return this.apply({ kind: "corners", corners: [...this.picks] });
  }

  private run(edit: Edit): Promise<Record<string, unknown>> {
    switch (edit.kind) {
      case "corners":
        return this.api.postCorners(edit.corners);
      case "split":
        return this.api.postSplit(edit.workflow);
      case "alpha":
        return this.api.postAlpha(edit.alpha);
      case "members":
        return this.api.postMembers(edit.req);
      case "build":
        return this.api.buildLayouts();
      case "simulate":
        return this.api.simulate(edit.req);
    }
  }

  /** refresh the client's revision from any cheap read */
  async refresh(): Promise<void> {
    await this.api.getPatches();
  }

  /**
   * Apply an edit with the stale-revision protocol: on 409 adopt the
   * server's revision and re-apply once.  A second 409 parks the edit for
   * the designer instead of dropping it.
   */
  async apply(edit: Edit): Promise<Record<string, unknown>> {
    try {
      const out = await this.run(edit);
      this.lastResult = out;
      return out;
    } catch (err) {
      if (!(err instanceof StaleRevisionError)) {
        throw err;
      }
      this.api.revision = err.serverRevision;
      await this.refresh();
    }
    try {
      const out = await this.run(edit);
      this.lastResult = out;
      return out;
    } catch (err) {
      if (err instanceof StaleRevisionError) {
        this.parked.push(edit);
      }
      throw err;
    }
  }

  /** re-apply edits parked after repeated conflicts, oldest first */
  async applyParked(): Promise<void> {
    const queue = this.parked;
    this.parked = [];
    for (const edit of queue) {
      await this.apply(edit);
    }
  }
}
