/**
 * Typed client for the eggrid HTTP/JSON service.
 *
 * Every mutation carries the revision it was prepared against
 * (`base_revision`); the server answers 409 when that revision is stale and
 * the client surfaces it as a StaleRevisionError so the session store can
 * refresh and re-apply.  The client never computes geometry - it only moves
 * numbers between the core and the view.
 */
import { z } from "zod";

/** face index + barycentric weights, the core's SurfacePoint record */
export type SurfacePick = [number, [number, number, number]];

export class ApiError extends Error {
  status: number;
  payload: unknown;
  constructor(status: number, payload: unknown, message?: string) {
    super(message ?? `request failed with ${status}`);
    this.status = status;
    this.payload = payload;
  }
}

export class StaleRevisionError extends ApiError {
  serverRevision: number;
  constructor(payload: { revision: number; message?: string }) {
    super(409, payload, payload.message ?? "stale revision");
    this.serverRevision = payload.revision;
  }
}

const meshSchema = z.object({
  vertices: z.array(z.array(z.number()).length(3)),
  faces: z.array(z.array(z.number().int()).length(3)),
  revision: z.number().int(),
});

const curvatureSchema = z.object({
  K: z.array(z.number()),
  revision: z.number().int(),
});

const polylineSchema = z.object({
  points: z.array(z.tuple([z.number().int(), z.array(z.number()).length(3)])),
  positions: z.array(z.array(z.number()).length(3)),
  length: z.number(),
});

const patchesSchema = z.object({
  patches: z.array(
    z.object({
      id: z.number().int(),
      corners: z.array(z.array(z.number()).length(3)).length(4),
      boundaries: z.array(polylineSchema).length(4),
    }),
  ),
  stale: z.boolean().optional(),
  revision: z.number().int(),
});

const claddingFamilySchema = z.object({
  u1: z.array(z.number()),
  u2: z.array(z.number()),
  slope_min: z.number(),
  slope_max: z.number(),
  k_min: z.number(),
  k_max: z.number(),
});

const claddingSchema = z.object({
  alpha: z.number(),
  planar_corners: z.array(z.array(z.number()).length(2)).length(4),
  u: claddingFamilySchema,
  v: claddingFamilySchema,
  revision: z.number().int(),
});

const membersSchema = z.object({
  revision: z.number().int(),
  u: z.object({
    boundaries: z.array(
      z.object({
        key: z.tuple([z.number().int(), z.number().int()]),
        length: z.number(),
        weight: z.number(),
        coords: z.array(z.number()),
      }),
    ),
    objective: z.number(),
  }),
  v: z.object({
    boundaries: z.array(
      z.object({
        key: z.tuple([z.number().int(), z.number().int()]),
        length: z.number(),
        weight: z.number(),
        coords: z.array(z.number()),
      }),
    ),
    objective: z.number(),
  }),
});

export type MeshPayload = z.infer<typeof meshSchema>;
export type PatchesPayload = z.infer<typeof patchesSchema>;
export type CladdingPayload = z.infer<typeof claddingSchema>;
export type MembersPayload = z.infer<typeof membersSchema>;

export interface MemberRequest {
  count_u?: number;
  count_v?: number;
  weights?: Record<string, Record<string, number>>;
}

export interface SimulateRequest {
  gravity?: boolean;
  scale?: number;
  material?: string;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  readonly base: string;
  /** last revision seen from the server; mutations are stamped with it */
  revision: number | null = null;
  private fetchImpl: FetchLike;

  constructor(base = "", fetchImpl: FetchLike = fetch) {
    this.base = base.replace(/\/$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const res = await this.fetchImpl(this.base + path, init);
    const text = await res.text();
    const payload = text ? JSON.parse(text) : {};
    if (res.status === 409) {
      throw new StaleRevisionError(payload);
    }
    if (!res.ok) {
      throw new ApiError(res.status, payload, payload.message);
    }
    if (typeof payload.revision === "number") {
      this.revision = payload.revision;
    }
    return payload;
  }

  private async mutate(path: string, body: Record<string, unknown>) {
    if (this.revision === null) {
      throw new Error("no revision loaded; fetch project state first");
    }
    return this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ ...body, base_revision: this.revision }),
    });
  }

  async getMesh(): Promise<MeshPayload> {
    return meshSchema.parse(await this.request("/mesh"));
  }

  async getCurvature(): Promise<number[]> {
    return curvatureSchema.parse(await this.request("/fields/curvature")).K;
  }

  async getDistance(pick: SurfacePick): Promise<number[]> {
    const [face, b] = pick;
    const q = `face=${face}&b0=${b[0]}&b1=${b[1]}&b2=${b[2]}`;
    const out = (await this.request(`/fields/distance?${q}`)) as {
      distance: number[];
    };
    return out.distance;
  }

  async analyze(): Promise<Record<string, unknown>> {
    return (await this.request("/analyze")) as Record<string, unknown>;
  }

  async getPatches(): Promise<PatchesPayload> {
    return patchesSchema.parse(await this.request("/patches"));
  }

  async getCladding(patch: number, samples = 65): Promise<CladdingPayload> {
    return claddingSchema.parse(
      await this.request(`/cladding?patch=${patch}&samples=${samples}`),
    );
  }

  async getMembers(): Promise<MembersPayload> {
    return membersSchema.parse(await this.request("/members"));
  }

  async getLayout(patch: number): Promise<Record<string, unknown>> {
    return (await this.request(`/layout?patch=${patch}`)) as Record<
      string,
      unknown
    >;
  }

  async getSim(): Promise<Record<string, unknown>> {
    return (await this.request("/sim")) as Record<string, unknown>;
  }

  async postCorners(corners: SurfacePick[]): Promise<Record<string, unknown>> {
    return (await this.mutate("/corners", { corners })) as Record<
      string,
      unknown
    >;
  }

  async postSplit(workflow: 1 | 2): Promise<Record<string, unknown>> {
    return (await this.mutate("/split", { workflow })) as Record<
      string,
      unknown
    >;
  }

  async postAlpha(
    alpha: Record<number, number> | null,
  ): Promise<Record<string, unknown>> {
    const body = alpha === null ? {} : { alpha };
    return (await this.mutate("/alpha", body)) as Record<string, unknown>;
  }

  async postMembers(req: MemberRequest): Promise<Record<string, unknown>> {
    return (await this.mutate("/members", { ...req })) as Record<
      string,
      unknown
    >;
  }

  async buildLayouts(): Promise<Record<string, unknown>> {
    return (await this.mutate("/layouts/build", {})) as Record<
      string,
      unknown
    >;
  }

  async simulate(req: SimulateRequest): Promise<Record<string, unknown>> {
    return (await this.mutate("/simulate", { ...req })) as Record<
      string,
      unknown
    >;
  }
}
