// Minimal HTML-string helpers. Everything user- or server-originated
// must pass through esc() before it reaches markup.

const REPLACEMENTS: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function esc(value: unknown): string {
  return String(value).replace(/[&<>"']/g, (ch) => REPLACEMENTS[ch] ?? ch);
}

export function row(cells: string[]): string {
  return `<tr>${cells.map((c) => `<td>${c}</td>`).join("")}</tr>`;
}

export function table(headers: string[], rows: string[], emptyMessage: string): string {
  if (rows.length === 0) {
    return `<p class="empty">${esc(emptyMessage)}</p>`;
  }
  const head = headers.map((h) => `<th>${esc(h)}</th>`).join("");
  return `<table><thead><tr>${head}</tr></thead><tbody>${rows.join("")}</tbody></table>`;
}

export function errorBox(message: string): string {
  return `<p class="error" role="alert">${esc(message)}</p>`;
}
