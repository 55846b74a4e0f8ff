// Server base URL. index.html sets window.TASKFORGE_BASE_URL at build/deploy
// time; an empty string means same-origin.
export function baseUrl(): string {
  const configured = (globalThis as Record<string, unknown>)["TASKFORGE_BASE_URL"];
  return typeof configured === "string" ? configured.replace(/\/$/, "") : "";
}

export function wsUrl(path: string): string {
  const base = baseUrl();
  if (base === "") {
    const scheme = location.protocol === "https:" ? "wss" : "ws";
    return `${scheme}://${location.host}${path}`;
  }
  return base.replace(/^http/, "ws") + path;
}
