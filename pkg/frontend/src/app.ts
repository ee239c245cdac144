/** DOM wiring for the latent navigator single-page app. */

import { ApiClient } from "./api.js";
import { playWavBase64, PlaybackHandle } from "./audio.js";
import { drawSpectrum, familyBarGroups, formatShare } from "./charts.js";
import { tripletText } from "./colors.js";
import {
  computeViewBox,
  drawScatter,
  layoutMarkers,
  legendEntries,
  nearestMarker,
  pixelToData,
  LayoutSpec,
  Marker,
  ViewBox,
} from "./scatter.js";
import { Navigator } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function serviceUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("service");
  return (fromQuery ?? "http://127.0.0.1:8787").replace(/\/$/, "");
}

const SPEC: LayoutSpec = { width: 640, height: 480, margin: 28 };

class App {
  private readonly nav: Navigator;
  private markers: Marker[] = [];
  private box: ViewBox = { minX: -1, maxX: 1, minY: -1, maxY: 1 };
  private hoverIndex: number | null = null;
  private playing: PlaybackHandle | null = null;

  private readonly scatterCanvas = el<HTMLCanvasElement>("scatter");
  private readonly spectrumCanvas = el<HTMLCanvasElement>("spectrum");
  private readonly morphCanvas = el<HTMLCanvasElement>("morph-spectrum");

  constructor(api: ApiClient) {
    this.nav = new Navigator(api, {
      onBanner: (msg) => this.banner(msg),
      onToast: (msg) => this.toast(msg),
      onRender: () => this.renderAll(),
    });
  }

  async start(): Promise<void> {
    el<HTMLSpanElement>("service-url").textContent = this.nav.api.baseUrl;
    el<HTMLButtonElement>("retry").addEventListener("click", () => void this.load());
    this.bindScatter();
    this.bindPanel();
    await this.load();
  }

  private async load(): Promise<void> {
    const ok = await this.nav.loadProjection();
    if (!ok) return;
    const proj = this.nav.projection;
    const info = this.nav.info;
    if (!proj || !info) return;
    this.box = computeViewBox(proj.coords);
    this.markers = layoutMarkers(proj, this.box, SPEC);
    const ex = proj.explained.map((v) => `${(100 * v).toFixed(1)}%`).join(" / ");
    el<HTMLSpanElement>("summary").textContent =
      `${proj.coords.length} points · latent ${info.latent_dim} · top-2 directions explain ${ex}`;
    const legend = el<HTMLDivElement>("legend");
    legend.innerHTML = "";
    for (const entry of legendEntries()) {
      const chip = document.createElement("span");
      chip.className = "chip";
      chip.innerHTML = `<i style="background:${entry.color}"></i>${entry.name}`;
      legend.appendChild(chip);
    }
    this.renderAll();
  }

  // -- scatter interactions ------------------------------------------------

  private bindScatter(): void {
    const canvas = this.scatterCanvas;
    canvas.width = SPEC.width;
    canvas.height = SPEC.height;
    canvas.addEventListener("mousemove", (ev) => {
      const [px, py] = this.eventPixel(ev);
      const hit = nearestMarker(this.markers, px, py);
      this.hoverIndex = hit ? hit.index : null;
      this.tooltip(ev, hit);
      this.renderScatter();
    });
    canvas.addEventListener("mouseleave", () => {
      this.hoverIndex = null;
      this.tooltip(null, null);
      this.renderScatter();
    });
    canvas.addEventListener("click", (ev) => {
      const [px, py] = this.eventPixel(ev);
      const hit = nearestMarker(this.markers, px, py);
      if (ev.shiftKey && hit) {
        this.nav.pinAnchor(hit.index);
        return;
      }
      const coords = hit
        ? this.nav.projection?.coords[hit.index] ?? pixelToData(this.box, SPEC, [px, py])
        : pixelToData(this.box, SPEC, [px, py]);
      void this.nav.decodeAt([coords[0], coords[1]]);
    });
  }

  private eventPixel(ev: MouseEvent): [number, number] {
    const rect = this.scatterCanvas.getBoundingClientRect();
    return [
      ((ev.clientX - rect.left) / rect.width) * SPEC.width,
      ((ev.clientY - rect.top) / rect.height) * SPEC.height,
    ];
  }

  private tooltip(ev: MouseEvent | null, hit: Marker | null): void {
    const tip = el<HTMLDivElement>("tooltip");
    if (!ev || !hit) {
      tip.style.display = "none";
      return;
    }
    const label = this.nav.projection?.labels[hit.index];
    tip.textContent = `${tripletText(label?.triplets)} (${label?.split ?? "?"})`;
    tip.style.display = "block";
    tip.style.left = `${ev.pageX + 12}px`;
    tip.style.top = `${ev.pageY + 12}px`;
  }

  // -- side panel ------------------------------------------------------------

  private bindPanel(): void {
    el<HTMLButtonElement>("play-decode").addEventListener("click", () => void this.playCursor());
    el<HTMLButtonElement>("build-morph").addEventListener("click", () => {
      const steps = Number(el<HTMLInputElement>("morph-steps").value) || 9;
      void this.nav.buildMorph(steps);
    });
    el<HTMLButtonElement>("play-morph").addEventListener("click", () => this.playMorph());
    el<HTMLInputElement>("morph-slider").addEventListener("input", (ev) => {
      this.nav.setMorphStep(Number((ev.target as HTMLInputElement).value));
    });
  }

  private async playCursor(): Promise<void> {
    const view = this.nav.decode;
    if (!view) return;
    try {
      const res = await this.nav.api.trajectory(Array(4).fill(view.z));
      this.startPlayback(res.wav_base64);
    } catch (err) {
      this.toast(`playback failed: ${(err as Error).message}`);
    }
  }

  private playMorph(): void {
    const wav = this.nav.morph?.response.wav_base64;
    if (wav) this.startPlayback(wav);
  }

  private startPlayback(b64: string): void {
    this.playing?.stop();
    this.playing = playWavBase64(b64, (on) => this.nav.setPlayback(on ? "playing" : "idle"));
  }

  // -- rendering ---------------------------------------------------------------

  private renderAll(): void {
    this.renderScatter();
    this.renderDecode();
    this.renderAnchors();
    this.renderMorph();
    el<HTMLSpanElement>("playback").textContent = this.nav.playback;
  }

  private renderScatter(): void {
    const ctx = this.scatterCanvas.getContext("2d");
    if (!ctx) return;
    const cursor = this.nav.cursor
      ? ((): [number, number] => {
          const [x, y] = this.nav.cursor.coords;
          const innerW = SPEC.width - 2 * SPEC.margin;
          const innerH = SPEC.height - 2 * SPEC.margin;
          return [
            SPEC.margin + ((x - this.box.minX) / (this.box.maxX - this.box.minX)) * innerW,
            SPEC.margin + (1 - (y - this.box.minY) / (this.box.maxY - this.box.minY)) * innerH,
          ];
        })()
      : null;
    drawScatter(ctx, this.markers, SPEC, {
      cursor,
      hoverIndex: this.hoverIndex,
      anchorIndices: this.nav.anchors.map((a) => a.index),
    });
  }

  private renderDecode(): void {
    const view = this.nav.decode;
    const ctx = this.spectrumCanvas.getContext("2d");
    if (ctx && view) {
      drawSpectrum(ctx, view.signal.magnitudes, this.spectrumCanvas.width, this.spectrumCanvas.height);
    }
    const bars = el<HTMLDivElement>("bars");
    bars.innerHTML = "";
    if (!view || !this.nav.info) return;
    const groups = familyBarGroups(
      view.symbol.families,
      this.nav.info.families,
      this.nav.info.vocab.instruments,
    );
    for (const group of groups) {
      const div = document.createElement("div");
      div.className = "bar-group";
      const max = Math.max(...group.values, 1e-9);
      const rows = group.values
        .map((v, i) => {
          const w = (100 * v) / max;
          const hot = i === group.top ? " hot" : "";
          return `<div class="bar-row"><span class="bar-label">${group.labels[i]}</span>` +
            `<span class="bar${hot}" style="width:${w.toFixed(1)}%"></span>` +
            `<span class="bar-val">${v.toFixed(2)}</span></div>`;
        })
        .join("");
      div.innerHTML =
        `<h4>${group.title} <small>Σ ${formatShare(group.sum)}</small></h4>${rows}`;
      bars.appendChild(div);
    }
  }

  private renderAnchors(): void {
    const list = el<HTMLDivElement>("anchors");
    list.innerHTML = "";
    for (const anchor of this.nav.anchors) {
      const row = document.createElement("div");
      row.className = "anchor-row";
      const label = document.createElement("span");
      label.textContent = `#${anchor.index} ${tripletText(anchor.triplets)}`;
      const decodeBtn = document.createElement("button");
      decodeBtn.textContent = "decode";
      decodeBtn.addEventListener("click", () => void this.nav.decodeAnchor(anchor));
      const dropBtn = document.createElement("button");
      dropBtn.textContent = "unpin";
      dropBtn.addEventListener("click", () => this.nav.unpinAnchor(anchor.index));
      row.append(label, decodeBtn, dropBtn);
      list.appendChild(row);
    }
  }

  private renderMorph(): void {
    const morph = this.nav.morph;
    const slider = el<HTMLInputElement>("morph-slider");
    const stepLabel = el<HTMLSpanElement>("morph-step");
    if (!morph) {
      slider.disabled = true;
      stepLabel.textContent = "-";
      return;
    }
    slider.disabled = false;
    slider.min = "0";
    slider.max = String(morph.response.frames.length - 1);
    slider.value = String(morph.step);
    stepLabel.textContent = `${morph.step + 1}/${morph.response.frames.length}`;
    const frame = morph.response.frames[morph.step];
    const ctx = this.morphCanvas.getContext("2d");
    if (ctx && frame) {
      drawSpectrum(ctx, frame, this.morphCanvas.width, this.morphCanvas.height, "#ffd166");
    }
  }

  // -- notifications ------------------------------------------------------------

  private banner(message: string | null): void {
    const node = el<HTMLDivElement>("banner");
    node.style.display = message ? "flex" : "none";
    el<HTMLSpanElement>("banner-text").textContent = message ?? "";
  }

  private toast(message: string): void {
    const host = el<HTMLDivElement>("toasts");
    const node = document.createElement("div");
    node.className = "toast";
    node.textContent = message;
    host.appendChild(node);
    setTimeout(() => node.remove(), 4000);
  }
}

const app = new App(new ApiClient(serviceUrl()));
void app.start();
