import { beforeEach, describe, expect, it } from "vitest";

import {
  DraftError,
  buildCancel,
  buildNewMission,
  buildReassign,
  buildReprioritize,
  coverAllFormula,
  guardedFormula,
  nextRequestId,
  resetRequestIds,
  sequenceFormula,
  validateFormulaText,
} from "../src/requests.js";

beforeEach(() => resetRequestIds());

describe("formula templates", () => {
  it("builds nested sequences", () => {
    expect(sequenceFormula(["a", "b", "c"])).toBe("F(a & F(b & F c))");
    expect(sequenceFormula(["a"])).toBe("F a");
  });

  it("builds unordered conjunctions", () => {
    expect(coverAllFormula(["a", "b"])).toBe("F a & F b");
  });

  it("builds guarded orderings", () => {
    expect(guardedFormula("cap", "surv")).toBe("(!cap U surv) & F cap");
  });

  it("rejects empty selections", () => {
    expect(() => sequenceFormula([])).toThrow(DraftError);
    expect(() => coverAllFormula([])).toThrow(DraftError);
  });
});

describe("free-text validation", () => {
  it("accepts balanced formulas", () => {
    expect(validateFormulaText(" F(a & F b) ")).toBe("F(a & F b)");
  });

  it("rejects empty and unbalanced input", () => {
    expect(() => validateFormulaText("  ")).toThrow(DraftError);
    expect(() => validateFormulaText("F(a & F b")).toThrow(DraftError);
    expect(() => validateFormulaText("F a)")).toThrow(DraftError);
  });
});

describe("envelope builders", () => {
  it("newMission carries versioned mission + tasks payload", () => {
    const env = buildNewMission("m9", "F a", [
      {
        id: "a",
        class: "staticKnown",
        region: [[0, 0], [1, 0], [1, 1], [0, 1]],
        subtasks: [{ n: 1, action: "visit", loc: [0.5, 0.5] }],
        eta: { visit: 1.0 },
      },
    ]);
    expect(env.v).toBe(1);
    expect(env.kind).toBe("newMission");
    expect(env.id).toBe("ui-1");
    expect(env.payload).toMatchObject({
      mission: { id: "m9", formula: "F a" },
    });
  });

  it("generates unique ids across drafts", () => {
    const a = buildCancel(["m1"]);
    const b = buildCancel(["m2"]);
    expect(a.id).not.toBe(b.id);
    expect(nextRequestId()).toBe("ui-3");
  });

  it("reprioritize requires an actual change", () => {
    expect(() => buildReprioritize([{ mission: "m1" }])).toThrow(DraftError);
    expect(() =>
      buildReprioritize([{ mission: "m1", weight: -1 }]),
    ).toThrow(DraftError);
    const env = buildReprioritize([
      { mission: "m1", weight: 3, deadline: 500 },
    ]);
    expect(env.kind).toBe("reprioritize");
  });

  it("reassign rejects empty or duplicate robot selections", () => {
    expect(() =>
      buildReassign([{ mission: "m1", robots: [] }]),
    ).toThrow(DraftError);
    expect(() =>
      buildReassign([{ mission: "m1", robots: ["r1", "r1"] }]),
    ).toThrow(DraftError);
    const env = buildReassign([{ mission: "m1", robots: ["r1", "r2"] }]);
    expect(env.payload).toEqual({
      assignments: [{ mission: "m1", robots: ["r1", "r2"] }],
    });
  });
});
