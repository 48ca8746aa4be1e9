import { Client } from "./api.js";
import { ReviewApp } from "./app.js";

const app = new ReviewApp(new Client(""));
void app.start();
