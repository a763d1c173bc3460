/** Minimal standalone SVG figure builder: axes, polylines, scatter, cells. */

export interface Extent {
  xmin: number;
  xmax: number;
  ymin: number;
  ymax: number;
}

const W = 640;
const H = 480;
const ML = 70;
const MR = 20;
const MT = 40;
const MB = 55;

export class Figure {
  private parts: string[] = [];
  constructor(
    private extent: Extent,
    private title: string,
    private xlabel: string,
    private ylabel: string,
  ) {}

  private sx(x: number): number {
    const { xmin, xmax } = this.extent;
    return ML + ((x - xmin) / (xmax - xmin || 1)) * (W - ML - MR);
  }

  private sy(y: number): number {
    const { ymin, ymax } = this.extent;
    return H - MB - ((y - ymin) / (ymax - ymin || 1)) * (H - MT - MB);
  }

  cell(x0: number, x1: number, y0: number, y1: number, color: string): void {
    const a = this.sx(x0);
    const b = this.sy(y1);
    const w = Math.abs(this.sx(x1) - a) + 0.5;
    const h = Math.abs(this.sy(y0) - b) + 0.5;
    this.parts.push(`<rect x="${a.toFixed(2)}" y="${b.toFixed(2)}" width="${w.toFixed(2)}" height="${h.toFixed(2)}" fill="${color}"/>`);
  }

  polyline(xs: number[], ys: number[], color = '#1f77b4', width = 1.2): void {
    const pts = xs.map((x, i) => `${this.sx(x).toFixed(2)},${this.sy(ys[i]).toFixed(2)}`).join(' ');
    this.parts.push(`<polyline points="${pts}" fill="none" stroke="${color}" stroke-width="${width}"/>`);
  }

  scatter(xs: number[], ys: number[], color = '#d62728', r = 4): void {
    for (let i = 0; i < xs.length; i++) {
      this.parts.push(
        `<circle cx="${this.sx(xs[i]).toFixed(2)}" cy="${this.sy(ys[i]).toFixed(2)}" r="${r}" fill="${color}"/>`,
      );
    }
  }

  hline(y: number, color = '#2ca02c', dash = '6,4'): void {
    this.parts.push(
      `<line x1="${ML}" y1="${this.sy(y).toFixed(2)}" x2="${W - MR}" y2="${this.sy(y).toFixed(2)}" stroke="${color}" stroke-dasharray="${dash}"/>`,
    );
  }

  bar(x0: number, x1: number, height: number, color = '#1f77b4'): void {
    this.cell(x0, x1, 0, height, color);
  }

  annotate(text: string, fx = 0.05, fy = 0.92): void {
    const x = ML + fx * (W - ML - MR);
    const y = MT + (1 - fy) * (H - MT - MB);
    this.parts.push(`<text x="${x.toFixed(1)}" y="${y.toFixed(1)}" font-size="14" fill="#333">${escapeXml(text)}</text>`);
  }

  render(): string {
    const { xmin, xmax, ymin, ymax } = this.extent;
    const ticksX = ticks(xmin, xmax, 6);
    const ticksY = ticks(ymin, ymax, 6);
    const axis: string[] = [];
    axis.push(`<rect x="${ML}" y="${MT}" width="${W - ML - MR}" height="${H - MT - MB}" fill="none" stroke="#999"/>`);
    for (const t of ticksX) {
      const x = this.sx(t);
      axis.push(`<line x1="${x}" y1="${H - MB}" x2="${x}" y2="${H - MB + 5}" stroke="#999"/>`);
      axis.push(`<text x="${x}" y="${H - MB + 20}" font-size="12" text-anchor="middle" fill="#333">${fmt(t)}</text>`);
    }
    for (const t of ticksY) {
      const y = this.sy(t);
      axis.push(`<line x1="${ML - 5}" y1="${y}" x2="${ML}" y2="${y}" stroke="#999"/>`);
      axis.push(`<text x="${ML - 8}" y="${y + 4}" font-size="12" text-anchor="end" fill="#333">${fmt(t)}</text>`);
    }
    return [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">`,
      `<rect width="${W}" height="${H}" fill="white"/>`,
      `<text x="${W / 2}" y="24" font-size="16" text-anchor="middle" fill="#111">${escapeXml(this.title)}</text>`,
      `<text x="${W / 2}" y="${H - 12}" font-size="13" text-anchor="middle" fill="#333">${escapeXml(this.xlabel)}</text>`,
      `<text x="18" y="${H / 2}" font-size="13" text-anchor="middle" fill="#333" transform="rotate(-90 18 ${H / 2})">${escapeXml(this.ylabel)}</text>`,
      ...this.parts,
      ...axis,
      `</svg>`,
    ].join('\n');
  }
}

function ticks(lo: number, hi: number, count: number): number[] {
  if (!(hi > lo)) return [lo];
  const out: number[] = [];
  for (let i = 0; i <= count; i++) out.push(lo + ((hi - lo) * i) / count);
  return out;
}

function fmt(v: number): string {
  if (v === 0) return '0';
  const a = Math.abs(v);
  if (a >= 1000 || a < 0.01) return v.toExponential(1);
  return Number(v.toPrecision(3)).toString();
}

function escapeXml(s: string): string {
  return s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');
}

/** Blue-to-red colormap over [0, 1]. */
export function heat(v: number): string {
  const t = Math.max(0, Math.min(1, v));
  const r = Math.round(40 + 200 * t);
  const g = Math.round(60 + 80 * (1 - Math.abs(t - 0.5) * 2));
  const b = Math.round(240 - 200 * t);
  return `rgb(${r},${g},${b})`;
}
