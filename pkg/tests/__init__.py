# tests package init