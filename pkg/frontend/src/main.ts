/**
 * DOM wiring for the relighting studio.
 *
 * Layout: an upload panel, a preview area with view-mode tabs, and the
 * slider board (9 bases x RGB, grouped into ambient / directional /
 * quadratic, with a white-light channel lock).
 */

import { ApiClient } from "./api.js";
import { StudioController, ViewMode } from "./studio.js";
import { BASIS_NAMES, GROUPS, GroupName, N_CHANNELS, SLIDER_MAX, SLIDER_MIN }
  from "./lighting.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const CHANNEL_NAMES = ["R", "G", "B"];
const GROUP_TITLES: Record<GroupName, string> = {
  dc: "Ambient",
  directional: "Directional",
  quadratic: "Quadratic",
};

let sessionUrls: Record<string, string> = {};
let previewUrl: string | null = null;
let originalUrl: string | null = null;

const sliders: HTMLInputElement[][] = [];

function buildSliders(root: HTMLElement, controller: StudioController): void {
  for (const group of Object.keys(GROUPS) as GroupName[]) {
    const box = document.createElement("fieldset");
    box.className = "slider-group";
    const legend = document.createElement("legend");
    legend.textContent = GROUP_TITLES[group];
    box.appendChild(legend);
    for (const basis of GROUPS[group]) {
      const row = document.createElement("div");
      row.className = "slider-row";
      const label = document.createElement("span");
      label.className = "basis-name";
      label.textContent = BASIS_NAMES[basis];
      row.appendChild(label);
      sliders[basis] = [];
      for (let c = 0; c < N_CHANNELS; c++) {
        const input = document.createElement("input");
        input.type = "range";
        input.min = String(SLIDER_MIN);
        input.max = String(SLIDER_MAX);
        input.step = "0.01";
        input.value = "0";
        input.className = `chan-${CHANNEL_NAMES[c].toLowerCase()}`;
        input.addEventListener("input", () => {
          controller.setCoefficient(basis, c, Number(input.value));
        });
        sliders[basis][c] = input;
        row.appendChild(input);
      }
      box.appendChild(row);
    }
    root.appendChild(box);
  }
}

function refreshSliders(coeffs: number[]): void {
  for (let basis = 0; basis < sliders.length; basis++) {
    const row = sliders[basis];
    if (!row) continue;
    for (let c = 0; c < N_CHANNELS; c++) {
      row[c].value = String(coeffs[basis * N_CHANNELS + c]);
    }
  }
}

function showView(mode: ViewMode): void {
  const img = $<HTMLImageElement>("preview");
  const side = $<HTMLDivElement>("side-by-side");
  side.style.display = mode === "side-by-side" ? "flex" : "none";
  img.style.display = mode === "side-by-side" ? "none" : "block";
  if (mode === "relit" && previewUrl) img.src = previewUrl;
  else if (mode !== "side-by-side" && sessionUrls[mode]) img.src = sessionUrls[mode];
  if (mode === "side-by-side") {
    if (originalUrl) $<HTMLImageElement>("side-original").src = originalUrl;
    if (previewUrl) $<HTMLImageElement>("side-relit").src = previewUrl;
  }
}

function toast(message: string): void {
  const box = $<HTMLDivElement>("toasts");
  const el = document.createElement("div");
  el.className = "toast";
  el.textContent = message;
  box.appendChild(el);
  setTimeout(() => el.remove(), 4000);
}

function download(name: string, blob: Blob): void {
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = name;
  a.click();
  URL.revokeObjectURL(a.href);
}

function setControlsEnabled(enabled: boolean): void {
  document.querySelectorAll("button, input").forEach((el) => {
    (el as HTMLButtonElement).disabled = !enabled;
  });
  $<HTMLInputElement>("upload").disabled = false;
}

function main(): void {
  let mode: ViewMode = "relit";
  const controller = new StudioController(new ApiClient(""), {
    onPreview: (blob) => {
      if (previewUrl) URL.revokeObjectURL(previewUrl);
      previewUrl = URL.createObjectURL(blob);
      showView(mode);
    },
    onSession: (_sid, urls) => {
      sessionUrls = urls;
      setControlsEnabled(true);
    },
    onLighting: refreshSliders,
    onToast: toast,
    onOnline: (online) => {
      if (!online) {
        toast("service unreachable; controls disabled");
        setControlsEnabled(false);
      }
    },
  });

  buildSliders($("sliders"), controller);
  setControlsEnabled(false);

  const lockBox = $<HTMLInputElement>("channel-lock");
  lockBox.checked = controller.channelLock;
  lockBox.addEventListener("change", () => {
    controller.channelLock = lockBox.checked;
  });

  $<HTMLInputElement>("upload").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    originalUrl = URL.createObjectURL(file);
    const space = $<HTMLInputElement>("linear-space").checked ? "linear" : "srgb";
    await controller.upload(file, undefined, space).catch(() => undefined);
  });

  $<HTMLInputElement>("reference").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const space = $<HTMLInputElement>("linear-space").checked ? "linear" : "srgb";
    await controller.transferFrom(file, space).catch(() => undefined);
  });

  $("reset").addEventListener("click", () => controller.resetToEstimated());
  $("brighter").addEventListener("click", () => controller.scaleLighting(1.1));
  $("dimmer").addEventListener("click", () => controller.scaleLighting(1 / 1.1));

  $("export-png").addEventListener("click", () => {
    const blob = controller.exportPreview();
    if (blob) download("relit.png", blob);
    else toast("nothing to export yet");
  });
  $("export-json").addEventListener("click", () => {
    const payload = JSON.stringify(controller.exportLighting(), null, 2);
    download("lighting.json", new Blob([payload], { type: "application/json" }));
  });

  document.querySelectorAll("[data-view]").forEach((el) => {
    el.addEventListener("click", () => {
      mode = (el as HTMLElement).dataset.view as ViewMode;
      controller.viewMode = mode;
      document.querySelectorAll("[data-view]").forEach(
        (b) => b.classList.toggle("active", b === el));
      showView(mode);
    });
  });
}

main();
