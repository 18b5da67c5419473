/** Integration tests against the real gateway server, spawned as a child
 * process. Covers scripted rail parity over 20 exchanges and the semantic
 * zoom walk, end to end over the wire protocol. */

import { ChildProcess, spawn } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { GatewayClient } from "../src/client.js";
import { directDelta, filterKey, FilterSpec, StateViewPayload } from "../src/protocol.js";
import { UiViewModel } from "../src/viewModel.js";
import { zoomGesture, ZoomLevel } from "../src/zoom.js";

const PORT = 8735 + (process.pid % 200);
const BASE = `http://127.0.0.1:${PORT}`;

const SALES_CSV = [
  "region,product,revenue,churned,signup",
  "EU,widget,100,false,2024-01-05",
  "EU,widget,200,false,2024-01-20",
  "US,gadget,150,true,2024-02-02",
  "US,widget,,false,2024-02-14",
  "APAC,gadget,90,true,2024-03-01",
  "EU,gadget,120,false,2024-03-15",
  "US,widget,300,false,2024-04-01",
  "APAC,widget,80,true,2024-04-18",
  "EU,widget,210,false,2024-05-06",
  "EU,gadget,500,false,2024-05-21",
  "",
].join("\n");

let server: ChildProcess;

async function waitForHealth(timeoutMs = 20000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/v1/health`);
      if (resp.ok) return;
    } catch {
      // server not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("gateway server did not become healthy");
}

beforeAll(async () => {
  server = spawn("python3", ["-m", "keyhole.cli", "serve", "--port", String(PORT)], {
    stdio: "ignore",
  });
  await waitForHealth();
}, 30000);

afterAll(() => {
  server?.kill();
});

/** Server truth: filter set parsed from the versioned snapshot file. */
async function serverFilterKeys(client: GatewayClient): Promise<Set<string>> {
  const text = await client.snapshot();
  const lines = text.split("\n");
  expect(lines[0]).toBe("keyhole-snapshot v1");
  const state = JSON.parse(lines.slice(1).join("\n")) as { active_filters: FilterSpec[] };
  return new Set(state.active_filters.map(filterKey));
}

function lastStateView(messages: Awaited<ReturnType<GatewayClient["utterance"]>>): StateViewPayload {
  const views = GatewayClient.stateViews(messages);
  expect(views).toHaveLength(1);
  return views[0]!.payload;
}

describe("rail parity across a scripted session", () => {
  it("tag set equals the server filter set after every exchange", async () => {
    const client = new GatewayClient(BASE, `parity-${process.pid}`);
    await client.createSession(SALES_CSV);
    const vm = new UiViewModel(client.sessionId);

    // 20 exchanges mixing chat mutations, direct deltas, and removals.
    const exchanges: Array<() => Promise<Awaited<ReturnType<GatewayClient["utterance"]>>>> = [
      () => client.utterance("filter region = EU"),
      () => client.utterance("filter product = widget"),
      () => client.utterance("show revenue by region"),
      () => client.utterance("filter churned = false"),
      () => client.utterance("remove filter product"),
      () => client.utterance("filter revenue between 50 and 400"),
      () => client.utterance("break down by product"),
      () => client.utterance("remove filter churned"),
      () => client.utterance("filter product = gadget"),
      () => client.utterance("show revenue by product"),
      () => client.delta(directDelta("SetCohort", { name: "trial" })),
      () => client.utterance("remove filter region"),
      () => client.utterance("filter region = US"),
      () => client.utterance("filter regoin = APAC"), // fuzzy column, Inferred tier
      () => client.utterance("remove filter revenue"),
      () => client.delta(directDelta("SetGroupBy", { columns: ["region"] })),
      () => client.utterance("filter churned = true"),
      () => client.utterance("remove filter region"),
      () => client.utterance("show revenue by signup"),
      () => client.utterance("remove filter product"),
    ];
    expect(exchanges).toHaveLength(20);

    for (const exchange of exchanges) {
      const messages = await exchange();
      const views = GatewayClient.stateViews(messages);
      expect(views).toHaveLength(1);
      vm.applyStateView(views[0]!);
      expect(vm.filterKeys()).toEqual(await serverFilterKeys(client));
    }
  }, 60000);

  it("removing a tag round-trips in one exchange", async () => {
    const client = new GatewayClient(BASE, `remove-${process.pid}`);
    await client.createSession(SALES_CSV);
    const vm = new UiViewModel(client.sessionId);

    vm.applyStateView(GatewayClient.stateViews(await client.utterance("filter region = EU"))[0]!);
    const tag = vm.railTags.find((t) => t.kind === "filter");
    expect(tag?.filter?.column).toBe("region");

    // Clicking the tag's X sends one RemoveFilter delta; the single
    // response StateView already shows the tag gone.
    const messages = await client.delta(
      directDelta("RemoveFilter", { filter: tag!.filter as unknown as Record<string, unknown> }),
    );
    const view = lastStateView(messages);
    vm.applyStateView(GatewayClient.stateViews(messages)[0]!);
    expect(view.rail_tags.filter((t) => t.kind === "filter")).toHaveLength(0);
    expect(vm.filterKeys().size).toBe(0);
    expect(await serverFilterKeys(client)).toEqual(new Set());
  }, 30000);

  it("inferred filters arrive with sub-silent confidence for styling", async () => {
    const client = new GatewayClient(BASE, `tier-${process.pid}`);
    await client.createSession(SALES_CSV);
    const vm = new UiViewModel(client.sessionId);
    vm.applyStateView(GatewayClient.stateViews(await client.utterance("filter regoin = EU"))[0]!);
    const tag = vm.railTags.find((t) => t.kind === "filter");
    expect(tag).toBeDefined();
    expect(tag!.confidence).toBeCloseTo(1 / (1 + 1 / 6), 6);
    expect(vm.tagTier(tag!)).toBe("Inferred");
  }, 30000);
});

describe("semantic zoom walk over the wire", () => {
  it("levels 1 -> 0 -> 2 with content from gateway CardViews", async () => {
    const client = new GatewayClient(BASE, `zoom-${process.pid}`);
    await client.createSession(SALES_CSV);
    const vm = new UiViewModel(client.sessionId);

    vm.applyStateView(
      GatewayClient.stateViews(await client.utterance("show revenue by region"))[0]!,
    );
    const card = vm.cards[0];
    expect(card).toBeDefined();
    expect(card!.zoom_level).toBe(1);

    // Wheel up: 1 -> 0, summary sentence.
    let gesture = zoomGesture(card!.id, card!.zoom_level as ZoomLevel, "up");
    expect(gesture).not.toBeNull();
    let messages = await client.delta(gesture!);
    vm.applyStateView(GatewayClient.stateViews(messages)[0]!);
    let cardViews = GatewayClient.cardViews(messages);
    expect(cardViews).toHaveLength(1);
    expect(cardViews[0]!.payload.zoom.level).toBe(0);
    expect(cardViews[0]!.payload.zoom.sentence).toMatch(/rising|falling|flat/);
    expect(vm.cards[0]!.zoom_level).toBe(0);

    // Wheel down twice: 0 -> 1 -> 2, raw rows at the bottom.
    for (const expected of [1, 2] as const) {
      gesture = zoomGesture(card!.id, vm.cards[0]!.zoom_level as ZoomLevel, "down");
      expect(gesture).not.toBeNull();
      messages = await client.delta(gesture!);
      vm.applyStateView(GatewayClient.stateViews(messages)[0]!);
      cardViews = GatewayClient.cardViews(messages);
      expect(cardViews).toHaveLength(1);
      expect(cardViews[0]!.payload.zoom.level).toBe(expected);
      expect(vm.cards[0]!.zoom_level).toBe(expected);
    }

    // Level 2 carries the raw rows: one per CSV data line.
    const raw = cardViews[0]!.payload.zoom;
    expect(raw.columns).toContain("region");
    expect(raw.columns).toContain("revenue");
    expect(raw.rows).toHaveLength(10);

    // A further wheel down clamps: no delta is produced.
    expect(zoomGesture(card!.id, 2, "down")).toBeNull();
  }, 30000);
});
