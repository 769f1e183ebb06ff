// The studio surface: latent sliders, live decoded preview, a similar-items
// gallery with method/scope controls, and cross-category recommendations.

import { ApiClient, Config, RecommendResponse, SeedEncoding, SimilarResponse } from "./api.js";
import { base64ToBytes, parsePpm, PpmImage } from "./ppm.js";
import { LatestRequestScheduler } from "./scheduler.js";

export const SLIDER_MIN = -4;
export const SLIDER_MAX = 4;
export const SLIDER_STEP = 0.05;
export const DEBOUNCE_MS = 50;
export const SIMILAR_COUNT = 8;

export interface StudioState {
  z: number[];
  method: string;
  scoped: boolean;
}

export interface StudioApp {
  state: StudioState;
  decodeScheduler: LatestRequestScheduler<Uint8Array>;
  galleryScheduler: LatestRequestScheduler<[SimilarResponse, RecommendResponse]>;
  /** last decoded preview, for environments without a canvas 2d context */
  lastPreview: PpmImage | null;
  setSlider(index: number, value: number): void;
  reseed(seed?: number): Promise<void>;
  /** resolves when every pending request has been applied */
  settled(): Promise<void>;
  root: HTMLElement;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text) node.textContent = text;
  return node;
}

function paintOnto(canvas: HTMLCanvasElement, image: PpmImage): void {
  canvas.width = image.width;
  canvas.height = image.height;
  let ctx: CanvasRenderingContext2D | null = null;
  try {
    ctx = canvas.getContext("2d");
  } catch {
    // headless DOMs throw here; state-level assertions cover those cases
  }
  if (ctx) {
    const data = ctx.createImageData(image.width, image.height);
    data.data.set(image.rgba);
    ctx.putImageData(data, 0, 0);
  }
}

function scoreLabel(method: string, score: number): string {
  const kind = method === "log_likelihood" ? "log-lik" : "dist";
  return `${kind} ${score.toFixed(3)}`;
}

export function buildApp(
  root: HTMLElement,
  api: ApiClient,
  config: Config,
  seed: SeedEncoding,
): StudioApp {
  const doc = root.ownerDocument;
  const state: StudioState = {
    z: seed.z.slice(),
    method: config.methods[0],
    scoped: false,
  };

  root.textContent = "";
  const banner = el(doc, "div", { class: "banner", "data-testid": "error-banner", hidden: "" });
  root.appendChild(banner);

  // one flag per request family so a healthy gallery refresh cannot mask a
  // still-failing decode (and vice versa)
  const failing = new Map<string, string>();
  const repaintBanner = () => {
    if (failing.size === 0) {
      banner.setAttribute("hidden", "");
      banner.textContent = "";
    } else {
      banner.textContent = `server error: ${[...failing.values()].join("; ")}`;
      banner.removeAttribute("hidden");
    }
  };
  const showError = (source: string, err: unknown) => {
    failing.set(source, err instanceof Error ? err.message : String(err));
    repaintBanner();
  };
  const clearError = (source: string) => {
    if (failing.delete(source)) repaintBanner();
  };

  // --- slider panel ---------------------------------------------------
  const sliderPanel = el(doc, "section", { class: "panel sliders", "data-testid": "slider-panel" });
  sliderPanel.appendChild(el(doc, "h2", {}, `latent code (${config.d_z} dims)`));
  const sliderInputs: HTMLInputElement[] = [];
  const sliderValues: HTMLElement[] = [];
  for (let i = 0; i < config.d_z; i++) {
    const row = el(doc, "div", { class: "slider-row" });
    row.appendChild(el(doc, "label", {}, `z[${i}]`));
    const input = el(doc, "input", {
      type: "range",
      min: String(SLIDER_MIN),
      max: String(SLIDER_MAX),
      step: String(SLIDER_STEP),
      value: String(state.z[i]),
      "data-testid": `slider-${i}`,
      "data-index": String(i),
    });
    const valueLabel = el(doc, "span", { class: "value" }, state.z[i].toFixed(2));
    input.addEventListener("input", () => {
      onSliderChange(i, Number(input.value));
    });
    row.appendChild(input);
    row.appendChild(valueLabel);
    sliderPanel.appendChild(row);
    sliderInputs.push(input);
    sliderValues.push(valueLabel);
  }
  root.appendChild(sliderPanel);

  // --- preview ---------------------------------------------------------
  const previewPanel = el(doc, "section", { class: "panel preview" });
  previewPanel.appendChild(el(doc, "h2", {}, "decoded preview"));
  const previewCanvas = el(doc, "canvas", {
    class: "preview-canvas",
    "data-testid": "preview",
    "data-decode-seq": "-1",
  });
  previewPanel.appendChild(previewCanvas);
  const seedButton = el(doc, "button", { "data-testid": "reseed" }, "random start");
  previewPanel.appendChild(seedButton);
  root.appendChild(previewPanel);

  // --- controls ----------------------------------------------------------
  const controls = el(doc, "section", { class: "panel controls" });
  const methodSelect = el(doc, "select", { "data-testid": "method-select" });
  for (const method of config.methods) {
    methodSelect.appendChild(el(doc, "option", { value: method }, method));
  }
  const scopeToggle = el(doc, "input", { type: "checkbox", "data-testid": "scope-toggle" });
  const scopeLabel = el(doc, "label", {}, " restrict to assigned cluster");
  scopeLabel.prepend(scopeToggle);
  controls.appendChild(el(doc, "label", {}, "method "));
  controls.appendChild(methodSelect);
  controls.appendChild(scopeLabel);
  root.appendChild(controls);

  // --- galleries ---------------------------------------------------------
  const similarPanel = el(doc, "section", { class: "panel gallery", "data-testid": "similar-gallery" });
  const similarHeading = el(doc, "h2", { "data-testid": "similar-label" });
  similarPanel.appendChild(similarHeading);
  const similarItems = el(doc, "div", { class: "items", "data-testid": "similar-items" });
  similarPanel.appendChild(similarItems);
  root.appendChild(similarPanel);

  const recommendPanel = el(doc, "section", { class: "panel gallery", "data-testid": "recommend-gallery" });
  recommendPanel.appendChild(el(doc, "h2", {}, "from other categories"));
  const recommendItems = el(doc, "div", { class: "items", "data-testid": "recommend-items" });
  recommendPanel.appendChild(recommendItems);
  root.appendChild(recommendPanel);

  const renderCard = (
    role: "similar" | "recommendation",
    itemId: number,
    tag: string,
    label: string,
    thumbnailB64: string,
  ): HTMLElement => {
    const card = el(doc, "figure", {
      class: `card ${role}`,
      "data-testid": `${role}-card`,
      "data-item-id": String(itemId),
      "data-tag": tag,
    });
    const thumb = el(doc, "canvas", { class: "thumb" });
    try {
      paintOnto(thumb, parsePpm(base64ToBytes(thumbnailB64)));
    } catch {
      // leave the canvas blank rather than losing the card
    }
    card.appendChild(thumb);
    card.appendChild(el(doc, "figcaption", {}, `#${itemId} ${tag} (${label})`));
    return card;
  };

  const applySimilar = (response: SimilarResponse) => {
    const scope = response.scoped ? `cluster ${response.cluster}` : "full db";
    similarHeading.textContent = `similar items - ${response.method} / ${scope}`;
    similarItems.textContent = "";
    for (const item of response.items) {
      const card = renderCard(
        "similar",
        item.item_id,
        item.tag,
        scoreLabel(response.method, item.score),
        item.thumbnail_ppm_base64,
      );
      card.setAttribute("data-cluster", String(item.cluster));
      similarItems.appendChild(card);
    }
  };

  const applyRecommend = (response: RecommendResponse) => {
    recommendItems.textContent = "";
    recommendItems.setAttribute("data-source-cluster", String(response.source_cluster));
    for (const entry of response.recommendations) {
      for (const match of entry.matches) {
        const card = renderCard(
          "recommendation",
          match.item_id,
          match.tag,
          scoreLabel(response.method, match.score),
          match.thumbnail_ppm_base64,
        );
        card.setAttribute("data-cluster", String(entry.cluster));
        recommendItems.appendChild(card);
      }
    }
  };

  // --- request plumbing ----------------------------------------------------
  const app: StudioApp = {
    state,
    lastPreview: null,
    decodeScheduler: undefined as unknown as LatestRequestScheduler<Uint8Array>,
    galleryScheduler: undefined as unknown as LatestRequestScheduler<
      [SimilarResponse, RecommendResponse]
    >,
    setSlider,
    reseed,
    settled,
    root,
  };

  app.decodeScheduler = new LatestRequestScheduler<Uint8Array>(
    () => api.decode(state.z.slice()),
    (bytes, seq) => {
      clearError("decode");
      app.lastPreview = parsePpm(bytes);
      paintOnto(previewCanvas, app.lastPreview);
      previewCanvas.setAttribute("data-decode-seq", String(seq));
    },
    DEBOUNCE_MS,
    (err) => showError("decode", err),
  );

  app.galleryScheduler = new LatestRequestScheduler<[SimilarResponse, RecommendResponse]>(
    () =>
      Promise.all([
        api.similar(state.z.slice(), state.method, SIMILAR_COUNT, state.scoped),
        api.recommend(state.z.slice(), state.method),
      ]),
    ([similar, recommendation]) => {
      clearError("gallery");
      applySimilar(similar);
      applyRecommend(recommendation);
    },
    DEBOUNCE_MS,
    (err) => showError("gallery", err),
  );

  function refreshAll(): void {
    app.decodeScheduler.request();
    app.galleryScheduler.request();
  }

  function onSliderChange(index: number, value: number): void {
    state.z[index] = value;
    sliderValues[index].textContent = value.toFixed(2);
    refreshAll();
  }

  function setSlider(index: number, value: number): void {
    sliderInputs[index].value = String(value);
    onSliderChange(index, value);
  }

  async function reseed(seedValue?: number): Promise<void> {
    try {
      const encoding = await api.seedEncoding(seedValue);
      for (let i = 0; i < config.d_z; i++) {
        state.z[i] = encoding.z[i];
        sliderInputs[i].value = String(encoding.z[i]);
        sliderValues[i].textContent = encoding.z[i].toFixed(2);
      }
      refreshAll();
    } catch (err) {
      showError("seed", err);
    }
  }

  async function settled(): Promise<void> {
    await app.decodeScheduler.settled();
    await app.galleryScheduler.settled();
  }

  methodSelect.addEventListener("change", () => {
    state.method = methodSelect.value;
    app.galleryScheduler.request();
  });
  scopeToggle.addEventListener("change", () => {
    state.scoped = scopeToggle.checked;
    app.galleryScheduler.request();
  });
  seedButton.addEventListener("click", () => {
    void reseed();
  });

  refreshAll();
  return app;
}

export async function bootstrap(root: HTMLElement, api: ApiClient): Promise<StudioApp> {
  const [config, seed] = await Promise.all([api.config(), api.seedEncoding()]);
  return buildApp(root, api, config, seed);
}
