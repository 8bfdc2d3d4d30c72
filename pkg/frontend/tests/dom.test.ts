import { describe, expect, it } from "vitest";

import { clear, el, formatNumber } from "../src/dom.js";

describe("formatNumber", () => {
  it("keeps integers verbatim", () => {
    expect(formatNumber(0)).toBe("0");
    expect(formatNumber(42)).toBe("42");
    expect(formatNumber(-7)).toBe("-7");
  });

  it("shows fractions to four decimals without trailing zeros", () => {
    expect(formatNumber(0.8606194690265486)).toBe("0.8606");
    expect(formatNumber(0.25)).toBe("0.25");
    expect(formatNumber(0.1)).toBe("0.1");
    expect(formatNumber(1.5)).toBe("1.5");
  });

  it("never invents precision beyond the displayed digits", () => {
    expect(Number.parseFloat(formatNumber(0.16946306737046756))).toBeCloseTo(0.1695, 4);
  });
});

describe("el", () => {
  it("applies class and text shorthands and plain attributes", () => {
    const node = el(document, "span", {
      class: "badge",
      text: "hello",
      "data-kind": "x",
    });
    expect(node.className).toBe("badge");
    expect(node.textContent).toBe("hello");
    expect(node.getAttribute("data-kind")).toBe("x");
  });

  it("appends string children as text nodes", () => {
    const node = el(document, "p", {}, ["a", el(document, "b", { text: "c" }), "d"]);
    expect(node.textContent).toBe("acd");
    expect(node.querySelector("b")?.textContent).toBe("c");
  });
});

describe("clear", () => {
  it("removes every child", () => {
    const node = el(document, "div", {}, ["x", el(document, "span", { text: "y" })]);
    clear(node);
    expect(node.childNodes.length).toBe(0);
  });
});
