import { describe, expect, it } from "vitest";

import { Message, RailTag, StateViewPayload, makeMessage } from "../src/protocol.js";
import { UiViewModel, styleFor, tierOf } from "../src/viewModel.js";

function tag(column: string, confidence = 1.0): RailTag {
  return {
    kind: "filter",
    label: `${column} = x`,
    filter: { column, op: "eq", values: ["x"], lo: null, hi: null },
    removable: true,
    origin: "chat",
    confidence,
  };
}

function stateView(sessionId: string, tags: RailTag[], hash = "h1"): Message<StateViewPayload> {
  return makeMessage("StateView", sessionId, {
    state_hash: hash,
    rail_tags: tags,
    cards: [],
    overload: {
      m: tags.length,
      v: 1 + tags.length,
      l_internal: 0,
      o: 0,
      dimensionality: 1,
      s: 0,
      o_prime: 0,
      p_error: 0,
      p_error_basis: "o",
    },
    forgotten_filters: [],
    recommendation: "ChatTolerable",
  });
}

describe("UiViewModel", () => {
  it("mirrors rail tags and hash from a StateView", () => {
    const vm = new UiViewModel("s");
    vm.applyStateView(stateView("s", [tag("region"), tag("product")]));
    expect(vm.stateHash).toBe("h1");
    expect(vm.filterSet().map((f) => f.column)).toEqual(["region", "product"]);
  });

  it("ignores views for other sessions", () => {
    const vm = new UiViewModel("s");
    vm.applyStateView(stateView("other", [tag("region")]));
    expect(vm.railTags).toEqual([]);
  });

  it("four filters yield four tags", () => {
    const vm = new UiViewModel("s");
    const tags = ["a", "b", "c", "d"].map((c) => tag(c));
    vm.applyStateView(stateView("s", tags));
    expect(vm.railTags).toHaveLength(4);
  });

  it("confirmed pending deltas are dropped", () => {
    const vm = new UiViewModel("s");
    vm.applyStateView(stateView("s", [tag("region")]));
    vm.pendingDeltas.push({ action: "RemoveFilter", payload: { column: "region" }, sentAt: 0 });
    vm.applyStateView(stateView("s", [], "h2"));
    expect(vm.pendingDeltas).toEqual([]);
  });

  it("unconfirmed optimistic removals survive until the server agrees", () => {
    const vm = new UiViewModel("s");
    vm.pendingDeltas.push({ action: "RemoveFilter", payload: { column: "region" }, sentAt: 0 });
    vm.applyStateView(stateView("s", [tag("region")]));
    expect(vm.pendingDeltas).toHaveLength(1);
  });

  it("disconnection makes tags read-only", () => {
    const vm = new UiViewModel("s");
    const t = tag("region");
    expect(vm.canRemove(t)).toBe(true);
    vm.setConnected(false);
    expect(vm.canRemove(t)).toBe(false);
  });

  it("overload indicator follows the recommendation", () => {
    const vm = new UiViewModel("s");
    expect(vm.overloadIndicator()).toBe("ok");
    const view = stateView("s", []);
    view.payload.recommendation = "ErrorProne";
    vm.applyStateView(view);
    expect(vm.overloadIndicator()).toBe("errorProne");
  });
});

describe("confidence styling", () => {
  it("is a pure function of tier", () => {
    expect(tierOf(0.95)).toBe("Silent");
    expect(tierOf(0.9)).toBe("Silent");
    expect(tierOf(0.857)).toBe("Inferred");
    expect(tierOf(0.6)).toBe("Inferred");
    expect(tierOf(0.5)).toBe("NeedsConfirmation");
  });

  it("inferred filters get a highlighted border", () => {
    const vm = new UiViewModel("s");
    const inferred = tag("region", 0.857);
    expect(styleFor(vm.tagTier(inferred)).border).toBe("highlighted");
    expect(styleFor(vm.tagTier(inferred)).requiresModal).toBe(false);
  });

  it("silent is plain, needs-confirmation demands a modal", () => {
    expect(styleFor("Silent")).toEqual({ border: "plain", requiresModal: false });
    expect(styleFor("NeedsConfirmation").requiresModal).toBe(true);
  });
});
