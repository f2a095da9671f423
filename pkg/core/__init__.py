# Core package 