/** Shared test plumbing: recorded-fixture loading and a recording fetch
 * double that replays those payloads through the real ApiClient. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { FetchLike } from "../src/api.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

/** Parse a payload recorded from the live HTTP interface. */
export function fixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf8")) as T;
}

export interface RecordedRequest {
  method: string;
  url: string;
  headers: Record<string, string>;
  body: unknown;
}

export interface FakeResponse {
  status: number;
  body: unknown;
}

export type Responder = (
  request: RecordedRequest,
) => FakeResponse | Promise<FakeResponse>;

export interface FakeHttp {
  fetch: FetchLike;
  requests: RecordedRequest[];
  posts(): RecordedRequest[];
}

/** A fetch double that records every request and answers via `respond`. */
export function fakeHttp(respond: Responder): FakeHttp {
  const requests: RecordedRequest[] = [];
  const fetch: FetchLike = async (input, init) => {
    const request: RecordedRequest = {
      method: init?.method ?? "GET",
      url: input,
      headers: { ...((init?.headers as Record<string, string>) ?? {}) },
      body: typeof init?.body === "string" ? JSON.parse(init.body) : undefined,
    };
    requests.push(request);
    const { status, body } = await respond(request);
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fetch, requests, posts: () => requests.filter((r) => r.method === "POST") };
}

export interface Deferred<T> {
  promise: Promise<T>;
  resolve(value: T): void;
}

export function deferred<T>(): Deferred<T> {
  let resolve!: (value: T) => void;
  const promise = new Promise<T>((res) => {
    resolve = res;
  });
  return { promise, resolve };
}

/** Let queued microtasks and zero-delay timers run. */
export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

/** A detached container element backed by the happy-dom document. */
export function container(): HTMLElement {
  const root = document.createElement("div");
  document.body.appendChild(root);
  return root;
}
