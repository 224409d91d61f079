import { describe, expect, it } from "vitest";

import { ApiClient, StaleRevisionError, SurfacePick } from "../src/api";
import { PickError, SessionStore } from "../src/state";
import { makeFakeServer } from "./fakeServer";

async function loadedStore() {
  const server = makeFakeServer();
  const api = new ApiClient("", server.fetch);
  const store = new SessionStore(api);
  await store.load();
  return { server, api, store };
}

const P0: SurfacePick = [0, [1, 0, 0]];
const P1: SurfacePick = [0, [0, 1, 0]];
const P2: SurfacePick = [0, [0, 0, 1]];
const P3: SurfacePick = [1, [0, 0, 1]];

describe("SessionStore picks", () => {
  it("rejects coincident picks client-side", async () => {
    const { store } = await loadedStore();
    store.addPick(P0);
    // same physical position expressed in the adjacent face
    expect(() => store.addPick([1, [1, 0, 0]])).toThrow(PickError);
    expect(store.picks.length).toBe(1);
  });

  it("caps picks at four and requires four to commit", async () => {
    const { store } = await loadedStore();
    await expect(store.commitCorners()).rejects.toThrow(/need four/);
    for (const p of [P0, P1, P2, P3]) {
      store.addPick(p);
    }
    expect(() => store.addPick([0, [0.4, 0.3, 0.3]])).toThrow(/four/);
  });
});

describe("SessionStore revision recovery", () => {
  it("re-applies an edit after a stale-revision conflict", async () => {
    const { server, api, store } = await loadedStore();
    for (const p of [P0, P1, P2, P3]) {
      store.addPick(p);
    }
    server.externalBump(); // concurrent writer invalidates our revision
    const out = await store.commitCorners();
    expect(out.report).toBeDefined();
    // the edit landed against the bumped revision, nothing was dropped
    expect(store.picks.length).toBe(4);
    expect(api.revision).toBe(server.revision);
    const posts = server.log.filter((e) => e.path === "/corners");
    expect(posts.length).toBe(2); // conflicted attempt + successful retry
  });

  it("parks the edit after repeated conflicts instead of dropping it", async () => {
    const { server, store } = await loadedStore();
    server.forceConflicts = 2;
    const err = await store
      .apply({ kind: "split", workflow: 1 })
      .catch((e) => e);
    expect(err).toBeInstanceOf(StaleRevisionError);
    expect(store.parked.length).toBe(1);
    await store.applyParked();
    expect(store.parked.length).toBe(0);
    const splits = server.log.filter((e) => e.path === "/split").length;
    expect(splits).toBeGreaterThanOrEqual(3); // 2 conflicts + eventual success
    expect(server.revision).toBeGreaterThan(2);
  });
});
