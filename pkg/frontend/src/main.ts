/**
 * Entry point: wires the session store, scene, and DOM controls together.
 * The page is served next to the core's HTTP service (same origin or via
 * the ?api= query parameter).
 */
import { ApiClient } from "./api";
import {
  etaBadgeClass,
  formatAlphaDeg,
  formatEta,
  formatNrmse,
  formatObjective,
  formatSlope,
} from "./format";
import { fieldColors, Overlay } from "./overlays";
import { pickSurfacePoint, pickPosition, Vec3 } from "./picking";
import { DesignerScene } from "./scene";
import { PickError, SessionStore } from "./state";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing #${id}`);
  }
  return node as T;
}

function setBadge(id: string, text: string, cls?: string): void {
  const badge = el<HTMLSpanElement>(id);
  badge.textContent = text;
  if (cls !== undefined) {
    badge.className = `badge ${cls}`;
  }
}

async function refreshPatches(
  store: SessionStore,
  scene: DesignerScene,
): Promise<void> {
  const patches = await store.api.getPatches();
  scene.clearPolylines();
  for (const patch of patches.patches) {
    for (const b of patch.boundaries) {
      scene.addPolyline(b.positions, 0x58c4ff);
    }
  }
  el<HTMLSpanElement>("patch-count").textContent = String(
    patches.patches.length,
  );
}

async function refreshCladding(store: SessionStore): Promise<void> {
  try {
    const c = await store.api.getCladding(store.activePatch);
    setBadge("alpha-badge", formatAlphaDeg(c.alpha));
    setBadge(
      "slope-badge",
      `${formatSlope(c.u.slope_min)} … ${formatSlope(c.u.slope_max)}`,
      c.u.slope_min >= c.u.k_min && c.u.slope_max <= c.u.k_max
        ? "badge-ok"
        : "badge-bad",
    );
  } catch {
    setBadge("alpha-badge", "—");
  }
}

async function refreshMembers(store: SessionStore): Promise<void> {
  try {
    const m = await store.api.getMembers();
    setBadge("objective-badge", formatObjective(m.u.objective + m.v.objective));
  } catch {
    setBadge("objective-badge", "—");
  }
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const api = new ApiClient(params.get("api") ?? "");
  const store = new SessionStore(api);
  const canvas = el<HTMLCanvasElement>("viewport");
  const scene = new DesignerScene(canvas);

  await store.load();
  const mesh = store.mesh!;
  scene.setMesh(mesh.vertices, mesh.faces);
  await refreshPatches(store, scene);

  el<HTMLSelectElement>("overlay").addEventListener("change", async (ev) => {
    const overlay = (ev.target as HTMLSelectElement).value as Overlay;
    store.setOverlay(overlay);
    if (overlay === "curvature") {
      const K = await api.getCurvature();
      scene.setVertexColors(fieldColors(K, true));
    } else {
      scene.setVertexColors(
        new Float32Array(mesh.vertices.length * 3).fill(0.75),
      );
    }
    scene.render();
  });

  canvas.addEventListener("pointerdown", (ev) => {
    if (!ev.shiftKey) {
      return; // plain drags orbit; shift-click picks corners
    }
    const rect = canvas.getBoundingClientRect();
    const ray = scene.pickRay(
      ((ev.clientX - rect.left) / rect.width) * 2 - 1,
      -((ev.clientY - rect.top) / rect.height) * 2 + 1,
    );
    const pick = pickSurfacePoint(
      ray.origin as Vec3,
      ray.dir as Vec3,
      mesh.vertices,
      mesh.faces,
    );
    if (pick === null) {
      return;
    }
    try {
      store.addPick(pick);
    } catch (err) {
      if (err instanceof PickError) {
        setBadge("status", err.message, "badge-bad");
        return;
      }
      throw err;
    }
    scene.setMarkers(
      store.picks.map((p) => pickPosition(p, mesh.vertices, mesh.faces)),
      mesh.diameter,
    );
    scene.render();
  });

  el<HTMLButtonElement>("commit-corners").addEventListener(
    "click",
    async () => {
      try {
        const out = (await store.commitCorners()) as {
          report?: { eta_u?: number; eta_v?: number };
        };
        const eta = Math.max(
          out.report?.eta_u ?? 1,
          out.report?.eta_v ?? 1,
        );
        setBadge("eta-badge", formatEta(eta), etaBadgeClass(eta));
        await refreshPatches(store, scene);
        await refreshCladding(store);
        scene.render();
      } catch (err) {
        setBadge("status", String(err), "badge-bad");
      }
    },
  );

  el<HTMLButtonElement>("split-1").addEventListener("click", async () => {
    await store.apply({ kind: "split", workflow: 1 });
    await refreshPatches(store, scene);
    scene.render();
  });

  el<HTMLButtonElement>("split-2").addEventListener("click", async () => {
    await store.apply({ kind: "split", workflow: 2 });
    await refreshPatches(store, scene);
    scene.render();
  });

  el<HTMLInputElement>("member-count").addEventListener(
    "change",
    async (ev) => {
      const n = parseInt((ev.target as HTMLInputElement).value, 10);
      await store.apply({
        kind: "members",
        req: { count_u: n, count_v: n },
      });
      await refreshMembers(store);
    },
  );

  el<HTMLButtonElement>("simulate").addEventListener("click", async () => {
    await store.apply({ kind: "build" });
    const out = (await store.apply({
      kind: "simulate",
      req: { gravity: false, scale: 1.0 },
    })) as { sim?: { nrmse?: number } };
    if (out.sim?.nrmse !== undefined) {
      setBadge("nrmse-badge", formatNrmse(out.sim.nrmse));
    }
  });

  scene.render();
}

boot().catch((err) => {
  setBadge("status", String(err), "badge-bad");
});
