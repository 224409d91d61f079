/**
 * In-memory stand-in for the core service, implementing just enough of the
 * HTTP contract for client tests: revision counter, base_revision checks
 * with 409 payloads, and canned geometry.
 */

export interface FakeServer {
  revision: number;
  log: Array<{ path: string; body: unknown }>;
  fetch: (url: string, init?: RequestInit) => Promise<Response>;
  /** simulate a concurrent writer bumping the revision */
  externalBump: () => void;
  /** number of 409s to force on the next mutations regardless of revision */
  forceConflicts: number;
}

const MESH = {
  vertices: [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
  ],
  faces: [
    [0, 1, 2],
    [0, 2, 3],
  ],
};

function json(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function makeFakeServer(): FakeServer {
  const server: FakeServer = {
    revision: 0,
    log: [],
    forceConflicts: 0,
    externalBump() {
      server.revision += 1;
    },
    async fetch(url: string, init?: RequestInit): Promise<Response> {
      const path = url.replace(/^https?:\/\/[^/]+/, "").split("?")[0];
      const method = init?.method ?? "GET";
      const body = init?.body ? JSON.parse(init.body as string) : {};
      server.log.push({ path, body });

      if (method === "GET") {
        switch (path) {
          case "/mesh":
            return json({ ...MESH, revision: server.revision });
          case "/fields/curvature":
            return json({
              K: [0, 0, 0, 0],
              revision: server.revision,
            });
          case "/patches":
            return json({ patches: [], revision: server.revision });
          case "/members":
            return json(
              { error: "NotFound", message: "members not distributed yet" },
              404,
            );
          default:
            return json({ error: "NotFound", message: path }, 404);
        }
      }

      const base = body.base_revision;
      if (base === undefined || base === null) {
        return json(
          { error: "BadRequest", message: "base_revision is required" },
          400,
        );
      }
      if (server.forceConflicts > 0) {
        server.forceConflicts -= 1;
        server.revision += 1;
        return json(
          {
            error: "StaleRevision",
            message: "forced conflict",
            revision: server.revision,
          },
          409,
        );
      }
      if (base !== server.revision) {
        return json(
          {
            error: "StaleRevision",
            message: `base revision ${base} != current ${server.revision}`,
            revision: server.revision,
          },
          409,
        );
      }
      server.revision += 1;
      return json({ report: { path }, revision: server.revision });
    },
  };
  return server;
}
