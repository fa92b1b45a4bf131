// Runtime configuration for static deployments: the asset bundle is
// environment-agnostic, and `portal-config.json` next to it names the
// portal endpoint. Missing file falls back to the build-time default.

export interface UiConfig {
  portalUrl: string;
}

export const DEFAULT_CONFIG: UiConfig = { portalUrl: "http://127.0.0.1:8080" };

export async function loadConfig(
  fetchImpl: (url: string) => Promise<Response> = fetch,
): Promise<UiConfig> {
  try {
    const response = await fetchImpl("./portal-config.json");
    if (!response.ok) {
      return DEFAULT_CONFIG;
    }
    const doc = (await response.json()) as Partial<UiConfig>;
    return { portalUrl: doc.portalUrl ?? DEFAULT_CONFIG.portalUrl };
  } catch {
    return DEFAULT_CONFIG;
  }
}
